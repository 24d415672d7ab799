#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "catch_amalgamated.hpp"
#include "relmeta/checkpoint.hpp"

using namespace relmeta;

namespace {

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

json sample_config() {
  return json{{"domain", "springs"}, {"n_particles", 3}, {"seed", 42}};
}

struct Fixture {
  ModuleLibrary lib = make_library(2, 1, 321);
  ProposalParams prop = make_proposal_params(50, 2, 654);
};

}  // namespace

TEST_CASE("checkpoints round-trip every parameter bitwise") {
  Fixture f;
  f.lib.edge_params[0][0] = 0.1 + 0.2;
  f.lib.node_params[0][7] = -1.0 / 3.0;
  f.prop.score_params[3] = 1e-300;
  const std::string path = temp_path("relmeta_ck_roundtrip.json");
  save_checkpoint(path, f.lib, f.prop, sample_config());

  const Checkpoint ck = load_checkpoint(path);
  REQUIRE(ck.library.edge_spec.widths == f.lib.edge_spec.widths);
  REQUIRE(ck.library.edge_params == f.lib.edge_params);
  REQUIRE(ck.library.node_params == f.lib.node_params);
  REQUIRE(ck.proposal == f.prop);
  REQUIRE(ck.config == sample_config());
  REQUIRE(library_checksum(ck.library) == library_checksum(f.lib));
  std::filesystem::remove(path);
}

TEST_CASE("saving twice produces identical bytes") {
  Fixture f;
  const std::string a = temp_path("relmeta_ck_a.json");
  const std::string b = temp_path("relmeta_ck_b.json");
  save_checkpoint(a, f.lib, f.prop, sample_config());
  save_checkpoint(b, f.lib, f.prop, sample_config());
  std::ifstream ia(a, std::ios::binary), ib(b, std::ios::binary);
  std::string ca((std::istreambuf_iterator<char>(ia)), std::istreambuf_iterator<char>());
  std::string cb((std::istreambuf_iterator<char>(ib)), std::istreambuf_iterator<char>());
  REQUIRE(ca == cb);
  REQUIRE_FALSE(ca.empty());
  std::filesystem::remove(a);
  std::filesystem::remove(b);
}

TEST_CASE("a wrong format version is refused") {
  Fixture f;
  const std::string path = temp_path("relmeta_ck_version.json");
  save_checkpoint(path, f.lib, f.prop, sample_config());
  json doc = json_parse_file(path);
  doc["format_version"] = kCheckpointFormatVersion + 1;
  write_atomic(path, json_dump(doc));
  REQUIRE_THROWS_AS(load_checkpoint(path), VersionError);
  std::filesystem::remove(path);
}

TEST_CASE("a non-checkpoint document is refused by kind") {
  const std::string path = temp_path("relmeta_ck_kind.json");
  write_atomic(path, R"({"kind":"task-set","format_version":1})");
  REQUIRE_THROWS_AS(load_checkpoint(path), VersionError);
  std::filesystem::remove(path);
}

TEST_CASE("a truncated file loads nothing") {
  Fixture f;
  const std::string path = temp_path("relmeta_ck_trunc.json");
  save_checkpoint(path, f.lib, f.prop, sample_config());
  std::ifstream in(path, std::ios::binary);
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  write_atomic(path, content.substr(0, content.size() / 2));
  REQUIRE_THROWS_AS(load_checkpoint(path), ParseError);
  std::filesystem::remove(path);
}

TEST_CASE("domain mismatches are refused on load") {
  Fixture f;
  const std::string path = temp_path("relmeta_ck_domain.json");
  save_checkpoint(path, f.lib, f.prop, sample_config());
  REQUIRE_NOTHROW(load_checkpoint(path, "springs"));
  REQUIRE_THROWS_AS(load_checkpoint(path, "charged"), ConfigError);
  std::filesystem::remove(path);
}

TEST_CASE("a missing file is an io error") {
  REQUIRE_THROWS_AS(load_checkpoint(temp_path("relmeta_ck_missing.json")), IoError);
}
