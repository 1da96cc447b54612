#pragma once

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "dsos/synthgen.hpp"
#include "dsos/trainer.hpp"

namespace dsos::testutil {

namespace fs = std::filesystem;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("dsos_" + tag + "_" + std::to_string(rd()));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

inline std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline void spit(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  os << text;
}

struct CommandResult {
  int exit_code = -1;
  std::string output;  // stdout + stderr
};

inline CommandResult run_command(const std::string& cmd) {
  CommandResult r;
  FILE* pipe = popen((cmd + " 2>&1").c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  std::size_t got = 0;
  while ((got = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.output.append(buf.data(), got);
  const int status = pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

/// The desk-scale benchmark: 10 classes in 16 dims, 5000 train samples, 20%
/// OOD and 20% ID noise.
inline GenConfig benchmark_gen(std::uint64_t seed) {
  GenConfig g;
  g.num_classes = 10;
  g.feature_dim = 16;
  g.train_size = 5000;
  g.test_size = 2000;
  g.rho = 0.2;
  g.psi = 0.2;
  g.seed = seed;
  return g;
}

inline TrainConfig benchmark_train(std::uint64_t seed) {
  TrainConfig t;
  t.seed = seed;
  return t;
}

/// Small, fast problem for unit tests.
inline GenConfig tiny_gen(std::uint64_t seed) {
  GenConfig g;
  g.num_classes = 4;
  g.feature_dim = 6;
  g.train_size = 400;
  g.test_size = 200;
  g.rho = 0.15;
  g.psi = 0.1;
  g.num_ood_centers = 2;
  g.seed = seed;
  return g;
}

inline TrainConfig tiny_train(std::uint64_t seed) {
  TrainConfig t;
  t.epochs = 6;
  t.lr_drop_epochs = {2, 4};
  t.hidden_dims = {12};
  t.seed = seed;
  return t;
}

}  // namespace dsos::testutil
