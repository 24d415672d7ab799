#pragma once

#include <string>
#include <utility>
#include <vector>

#include "relmeta/gnn.hpp"
#include "relmeta/json_io.hpp"
#include "relmeta/proposal.hpp"

namespace relmeta {

inline constexpr int kCheckpointFormatVersion = 1;

// Everything a later run needs to pick up where training stopped: module
// weights, the proposal encoder, and an echo of the generating config.
struct Checkpoint {
  ModuleLibrary library;
  ProposalParams proposal;
  json config;
};

namespace detail {

inline json spec_to_json(const MlpSpec& spec) {
  return json{{"widths", spec.widths},
              {"activation", spec.activation == Activation::Tanh ? "tanh" : "relu"}};
}

inline MlpSpec spec_from_json(const json& j) {
  MlpSpec spec;
  spec.widths = json_get<std::vector<int>>(j, "widths");
  const std::string act = json_get<std::string>(j, "activation");
  if (act == "tanh")
    spec.activation = Activation::Tanh;
  else if (act == "relu")
    spec.activation = Activation::Relu;
  else
    throw ParseError("unknown activation \"" + act + "\"");
  spec.validate();
  return spec;
}

inline json params_to_json(const std::vector<ParamVector>& params) {
  json arr = json::array();
  for (const ParamVector& p : params) arr.push_back(p);
  return arr;
}

inline std::vector<ParamVector> params_from_json(const json& j, const std::string& key) {
  if (!j.is_array()) throw ParseError("field \"" + key + "\": expected an array");
  std::vector<ParamVector> out;
  try {
    for (const json& item : j) out.push_back(item.get<ParamVector>());
  } catch (const json::exception& e) {
    throw ParseError("field \"" + key + "\": " + e.what());
  }
  return out;
}

}  // namespace detail

inline json library_to_json(const ModuleLibrary& lib) {
  return json{{"edge_spec", detail::spec_to_json(lib.edge_spec)},
              {"node_spec", detail::spec_to_json(lib.node_spec)},
              {"edge_params", detail::params_to_json(lib.edge_params)},
              {"node_params", detail::params_to_json(lib.node_params)}};
}

inline ModuleLibrary library_from_json(const json& j) {
  ModuleLibrary lib;
  lib.edge_spec = detail::spec_from_json(json_field(j, "edge_spec"));
  lib.node_spec = detail::spec_from_json(json_field(j, "node_spec"));
  lib.edge_params = detail::params_from_json(json_field(j, "edge_params"), "edge_params");
  lib.node_params = detail::params_from_json(json_field(j, "node_params"), "node_params");
  lib.validate();
  return lib;
}

inline json proposal_to_json(const ProposalParams& pp) {
  return json{{"train_horizon", pp.train_horizon},
              {"n_edge_modules", pp.n_edge_modules},
              {"embed_dim", pp.embed_dim},
              {"embed_spec", detail::spec_to_json(pp.embed_spec)},
              {"edge_spec", detail::spec_to_json(pp.edge_spec)},
              {"node_spec", detail::spec_to_json(pp.node_spec)},
              {"score_spec", detail::spec_to_json(pp.score_spec)},
              {"embed_params", pp.embed_params},
              {"edge_params", pp.edge_params},
              {"node_params", pp.node_params},
              {"score_params", pp.score_params}};
}

inline ProposalParams proposal_from_json(const json& j) {
  ProposalParams pp;
  pp.train_horizon = json_get<int>(j, "train_horizon");
  pp.n_edge_modules = json_get<int>(j, "n_edge_modules");
  pp.embed_dim = json_get<int>(j, "embed_dim");
  pp.embed_spec = detail::spec_from_json(json_field(j, "embed_spec"));
  pp.edge_spec = detail::spec_from_json(json_field(j, "edge_spec"));
  pp.node_spec = detail::spec_from_json(json_field(j, "node_spec"));
  pp.score_spec = detail::spec_from_json(json_field(j, "score_spec"));
  pp.embed_params = json_get<ParamVector>(j, "embed_params");
  pp.edge_params = json_get<ParamVector>(j, "edge_params");
  pp.node_params = json_get<ParamVector>(j, "node_params");
  pp.score_params = json_get<ParamVector>(j, "score_params");
  pp.validate();
  return pp;
}

inline void save_checkpoint(const std::string& path, const ModuleLibrary& lib,
                            const ProposalParams& pp, const json& config_echo) {
  json doc{{"format_version", kCheckpointFormatVersion},
           {"kind", "relmeta-checkpoint"},
           {"config", config_echo},
           {"library", library_to_json(lib)},
           {"proposal", proposal_to_json(pp)}};
  write_atomic(path, json_dump(doc) + "\n");
}

// expected_domain, when non-empty, must match config.domain in the echo; a
// springs checkpoint cannot silently feed a charged run.
inline Checkpoint load_checkpoint(const std::string& path,
                                  const std::string& expected_domain = {}) {
  const json doc = json_parse_file(path);
  const std::string kind = json_get<std::string>(doc, "kind");
  if (kind != "relmeta-checkpoint")
    throw VersionError(path + ": kind \"" + kind + "\" is not a checkpoint");
  const int version = json_get<int>(doc, "format_version");
  if (version != kCheckpointFormatVersion)
    throw VersionError(path + ": format_version " + std::to_string(version) +
                       " unsupported (expected " +
                       std::to_string(kCheckpointFormatVersion) + ")");
  Checkpoint ck;
  ck.config = json_field(doc, "config");
  if (!expected_domain.empty()) {
    const std::string domain = json_get<std::string>(ck.config, "domain");
    if (domain != expected_domain)
      throw ConfigError(path + ": checkpoint domain \"" + domain + "\" does not match \"" +
                        expected_domain + "\"");
  }
  ck.library = library_from_json(json_field(doc, "library"));
  ck.proposal = proposal_from_json(json_field(doc, "proposal"));
  return ck;
}

}  // namespace relmeta
