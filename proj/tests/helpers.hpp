#ifndef RAGCUR_TESTS_HELPERS_HPP
#define RAGCUR_TESTS_HELPERS_HPP

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ragcur/corpus.hpp"

namespace testutil {

// Unique scratch directory, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    dir_ = std::filesystem::temp_directory_path() /
           ("ragcur-test-" + tag + "-" + std::to_string(::getpid()) + "-" +
            std::to_string(counter++));
    std::filesystem::create_directories(dir_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(dir_, ec);
  }
  const std::filesystem::path& path() const { return dir_; }
  std::filesystem::path operator/(const std::string& name) const {
    return dir_ / name;
  }

 private:
  std::filesystem::path dir_;
};

inline void write_file(const std::filesystem::path& path,
                       const std::string& content) {
  std::ofstream out(path);
  out << content;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline ragcur::DocumentRecord make_doc(
    const std::string& id, const std::string& text,
    ragcur::DocOrigin origin = ragcur::DocOrigin::retrieved) {
  return {id, text, std::nullopt, origin};
}

inline ragcur::QueryRecord make_query(const std::string& id,
                                      const std::string& question,
                                      std::vector<std::string> answers) {
  return {id, question, std::move(answers), std::nullopt};
}

}  // namespace testutil

#endif  // RAGCUR_TESTS_HELPERS_HPP
