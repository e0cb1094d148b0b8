#pragma once

// Run manifests: everything needed to replay a command, plus provenance.

#include <chrono>
#include <cstdint>
#include <ctime>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "zinbhmm/io/config.hpp"
#include "zinbhmm/io/dataset.hpp"
#include "zinbhmm/version.hpp"

namespace zinbhmm::io {

inline std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << v;
  return ss.str();
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream ss;
  ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return ss.str();
}

struct RunManifest {
  std::string command;
  /// Complete resolved configuration of the run; replaying uses only this.
  Json config;
  std::uint64_t seed = 0;
  std::string started_at;
  std::string finished_at;
  std::vector<std::string> outputs;

  std::string config_hash() const { return hex64(fnv1a64(config.dump())); }

  Json to_json() const {
    return Json{{"command", command},
                {"software_version", kVersion},
                {"config_hash", config_hash()},
                {"seed", seed},
                {"config", config},
                {"started_at", started_at},
                {"finished_at", finished_at},
                {"outputs", outputs}};
  }

  static RunManifest from_json(const Json& j) {
    RunManifest m;
    try {
      m.command = j.at("command").get<std::string>();
      m.config = j.at("config");
      m.seed = j.at("seed").get<std::uint64_t>();
      if (j.contains("started_at")) m.started_at = j.at("started_at").get<std::string>();
      if (j.contains("finished_at")) m.finished_at = j.at("finished_at").get<std::string>();
      if (j.contains("outputs")) m.outputs = j.at("outputs").get<std::vector<std::string>>();
    } catch (const Json::exception& e) {
      throw ConfigError(std::string("manifest: ") + e.what());
    }
    if (j.contains("config_hash") && j.at("config_hash") != m.config_hash())
      throw ConfigError("manifest: config_hash does not match the embedded config");
    return m;
  }
};

inline RunManifest read_manifest(const std::string& path) {
  return RunManifest::from_json(load_json(path));
}

inline void write_manifest(const std::string& path, const RunManifest& m) {
  write_json(path, m.to_json());
}

}  // namespace zinbhmm::io
