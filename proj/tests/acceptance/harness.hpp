#ifndef DDFLOW_ACCEPTANCE_HARNESS_HPP_
#define DDFLOW_ACCEPTANCE_HARNESS_HPP_

#include <chrono>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace ddflow::acceptance {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string title;
  std::function<Outcome()> run;
};

/// Scratch space shared by the criteria of one invocation.
struct Context {
  std::filesystem::path work_dir;
};

Context& context();

std::vector<Criterion> fast_criteria();
std::vector<Criterion> training_criteria();

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string format(const char* fmt, ...) __attribute__((format(printf, 1, 2)));

}  // namespace ddflow::acceptance

#endif  // DDFLOW_ACCEPTANCE_HARNESS_HPP_
