#pragma once

// Plumbing shared by the subcommands: settings that come from flags or a
// JSON config file, run manifests, logging and scene-level parallelism.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <stdexcept>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "coopscene/scene_io.hpp"

namespace coopscene::tool {

namespace fs = std::filesystem;
using nlohmann::json;

// Bad flags, inconsistent modes, missing inputs: exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Logging to stderr; COOPSCENE_LOG = quiet | info | debug (or 0 | 1 | 2).

enum class Level { Quiet = 0, Info = 1, Debug = 2 };

inline Level log_level() {
  static const Level level = [] {
    const char* env = std::getenv("COOPSCENE_LOG");
    if (!env) return Level::Info;
    const std::string s = env;
    if (s == "quiet" || s == "0" || s == "error") return Level::Quiet;
    if (s == "debug" || s == "2" || s == "trace") return Level::Debug;
    return Level::Info;
  }();
  return level;
}

inline std::mutex& log_mutex() {
  static std::mutex m;
  return m;
}

inline void log(Level lvl, const std::string& msg) {
  if (static_cast<int>(lvl) > static_cast<int>(log_level())) return;
  std::lock_guard lock(log_mutex());
  std::cerr << msg << '\n';
}

inline std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ---------------------------------------------------------------------------
// Settings: every numeric option is both a flag and a config key. Values given
// on the command line win over the config file.

class Settings {
 public:
  template <class T>
  CLI::Option* add(CLI::App* app, const std::string& key, T& target, const std::string& help) {
    CLI::Option* opt = app->add_option("--" + key, target, help)->capture_default_str();
    entries_.push_back({key, opt, [&target](const json& j) { target = j.get<T>(); },
                        [&target] { return json(target); }});
    return opt;
  }

  CLI::Option* add_flag(CLI::App* app, const std::string& key, bool& target, const std::string& help) {
    CLI::Option* opt = app->add_flag("--" + key, target, help);
    entries_.push_back({key, opt, [&target](const json& j) { target = j.get<bool>(); },
                        [&target] { return json(target); }});
    return opt;
  }

  // An option without a default: absent unless given.
  CLI::Option* add_optional(CLI::App* app, const std::string& key, std::optional<double>& target,
                            const std::string& help) {
    CLI::Option* opt = app->add_option_function<double>(
        "--" + key, [&target](double v) { target = v; }, help);
    entries_.push_back({key, opt,
                        [&target](const json& j) {
                          if (!j.is_null()) target = j.get<double>();
                        },
                        [&target] { return target ? json(*target) : json(nullptr); }});
    return opt;
  }

  void add_config_flag(CLI::App* app) {
    app->add_option("--config", config_path_, "JSON config file or run manifest; flags take precedence")
        ->check(CLI::ExistingFile);
  }

  // Loads the config file, if any, into every setting not given as a flag.
  void resolve() {
    if (config_path_.empty()) return;
    json j;
    try {
      j = load_json(config_path_);
    } catch (const Error& e) {
      throw UsageError(std::string("cannot read config: ") + e.what());
    }
    if (j.is_object() && j.value("kind", "") == "manifest") j = j.value("config", json::object());
    if (!j.is_object()) throw UsageError("config '" + config_path_ + "' must hold a JSON object");
    for (const auto& [key, value] : j.items()) {
      Entry* e = find(key);
      if (!e) throw UsageError("unknown config key '" + key + "' in " + config_path_);
      if (e->opt->count() > 0) continue;
      try {
        e->set(value);
      } catch (const json::exception&) {
        throw UsageError("config key '" + key + "' has the wrong type");
      }
    }
  }

  json resolved() const {
    json j = json::object();
    for (const auto& e : entries_) j[e.key] = e.get();
    return j;
  }

  const std::string& config_path() const { return config_path_; }

 private:
  struct Entry {
    std::string key;
    CLI::Option* opt;
    std::function<void(const json&)> set;
    std::function<json()> get;
  };

  Entry* find(const std::string& key) {
    for (auto& e : entries_) {
      if (e.key == key) return &e;
    }
    return nullptr;
  }

  std::vector<Entry> entries_;
  std::string config_path_;
};

// ---------------------------------------------------------------------------
// Manifest

inline std::string checksum_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()), phase_(start_) {}

  // Closes the current phase under `name`.
  void lap(const std::string& name) {
    const auto now = std::chrono::steady_clock::now();
    phases_[name] += std::chrono::duration<double>(now - phase_).count();
    phase_ = now;
  }

  double total() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count(); }
  const std::map<std::string, double>& phases() const { return phases_; }

 private:
  std::chrono::steady_clock::time_point start_, phase_;
  std::map<std::string, double> phases_;
};

struct Manifest {
  Manifest(std::string sub, json cfg, std::uint64_t sd, std::vector<std::string> in, fs::path out)
      : subcommand(std::move(sub)), config(std::move(cfg)), seed(sd), inputs(std::move(in)), out_dir(std::move(out)) {}

  std::string subcommand;
  json config;
  std::uint64_t seed = 0;
  std::vector<std::string> inputs;
  fs::path out_dir;                  // empty: no output directory
  std::vector<std::string> outputs;  // relative to out_dir, in write order

  // Writes a file into the output directory and records it.
  void write(const std::string& name, const std::string& text) { record(name, write_output(name, text)); }

  // Thread-safe write; the caller records the returned checksum in a fixed order.
  std::string write_output(const std::string& name, const std::string& text) const {
    write_text_atomic(out_dir / name, text);
    return checksum_hex(text);
  }

  void record(const std::string& name, const std::string& sum) {
    outputs.push_back(name);
    checksums[name] = sum;
  }

  // Wall-clock fields are the only part that differs between repeated runs.
  json to_json(const Stopwatch& sw) const {
    json phases = json::object();
    for (const auto& [k, v] : sw.phases()) phases[k] = v;
    json sums = json::object();
    for (const auto& [k, v] : checksums) sums[k] = "fnv1a64:" + v;
    return {{"schema_version", kSchemaVersion},
            {"kind", "manifest"},
            {"tool", "coopscene"},
            {"subcommand", subcommand},
            {"config", config},
            {"seed", seed},
            {"inputs", inputs},
            {"outputs", outputs},
            {"checksums", sums},
            {"wall_clock_s", sw.total()},
            {"phases_s", phases}};
  }

  void finish(const Stopwatch& sw) const {
    const std::string text = dump(to_json(sw));
    if (out_dir.empty()) {
      log(Level::Debug, text);
    } else {
      write_text_atomic(out_dir / "manifest.json", text);
    }
    std::string line = subcommand + " timing:";
    for (const auto& [k, v] : sw.phases()) line += " " + k + " " + fmt("%.3f", v) + "s";
    line += " total " + fmt("%.3f", sw.total()) + "s";
    log(Level::Info, line);
  }

  std::map<std::string, std::string> checksums;
};

inline void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::InvalidArgument, "cannot create '" + dir.string() + "': " + ec.message());
}

// ---------------------------------------------------------------------------
// Parallelism: results land by index, the lowest-index failure is rethrown.

inline void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& body) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        body(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(n)));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// Files under `path` (or `path` itself) whose names end with `suffix`, sorted.
inline std::vector<fs::path> collect(const fs::path& path, const std::string& suffix) {
  if (!fs::exists(path)) throw UsageError("input '" + path.string() + "' does not exist");
  std::vector<fs::path> out;
  if (fs::is_directory(path)) {
    for (const auto& e : fs::directory_iterator(path)) {
      const std::string name = e.path().filename().string();
      if (e.is_regular_file() && name.size() >= suffix.size() &&
          name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0) {
        out.push_back(e.path());
      }
    }
    std::sort(out.begin(), out.end());
  } else {
    out.push_back(path);
  }
  return out;
}

}  // namespace coopscene::tool
