#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"
#include "relmeta/common.hpp"

namespace relmeta {

using nlohmann::json;

namespace detail {

inline void dump_value(const json& j, std::string& out) {
  switch (j.type()) {
    case json::value_t::null:
      out += "null";
      break;
    case json::value_t::boolean:
      out += j.get<bool>() ? "true" : "false";
      break;
    case json::value_t::number_integer:
      out += std::to_string(j.get<std::int64_t>());
      break;
    case json::value_t::number_unsigned:
      out += std::to_string(j.get<std::uint64_t>());
      break;
    case json::value_t::number_float: {
      double v = j.get<double>();
      require(std::isfinite(v), "json_dump: non-finite number");
      char buf[40];
      int len = std::snprintf(buf, sizeof buf, "%.17g", v);
      out.append(buf, len);
      // keep floats typed as floats on re-parse
      if (out.find_first_of(".eE", out.size() - len) == std::string::npos) out += ".0";
      break;
    }
    case json::value_t::string:
      out += json(j.get<std::string>()).dump();
      break;
    case json::value_t::array: {
      out += '[';
      bool first = true;
      for (const json& item : j) {
        if (!first) out += ',';
        first = false;
        dump_value(item, out);
      }
      out += ']';
      break;
    }
    case json::value_t::object: {
      out += '{';
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out += ',';
        first = false;
        out += json(it.key()).dump();
        out += ':';
        dump_value(it.value(), out);
      }
      out += '}';
      break;
    }
    default:
      throw ContractError("json_dump: unsupported value type");
  }
}

}  // namespace detail

// Serializer used for every artifact we write: doubles carry 17 significant
// digits so that parse(dump(x)) reproduces x bit-for-bit.
inline std::string json_dump(const json& j) {
  std::string out;
  detail::dump_value(j, out);
  return out;
}

inline json json_parse(const std::string& text, const std::string& origin = "<string>") {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(origin + ": parse error at byte " + std::to_string(e.byte) + ": " + e.what());
  }
}

inline json json_parse_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return json_parse(ss.str(), path);
}

// Write-to-temp then rename, so readers never observe a half-written file.
inline void write_atomic(const std::string& path, const std::string& content) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp + " for writing");
    out << content;
    if (!out.flush()) throw IoError("write failed for " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("rename " + tmp + " -> " + path + ": " + ec.message());
}

// Field accessors that turn missing/mistyped keys into ParseErrors naming
// the key, instead of nlohmann's generic type_error.
inline const json& json_field(const json& j, const std::string& key) {
  auto it = j.find(key);
  if (it == j.end()) throw ParseError("missing field \"" + key + "\"");
  return *it;
}

template <typename T>
T json_get(const json& j, const std::string& key) {
  try {
    return json_field(j, key).get<T>();
  } catch (const json::exception& e) {
    throw ParseError("field \"" + key + "\": " + e.what());
  }
}

}  // namespace relmeta
