#ifndef DDFLOW_TRAIN_CONFIG_HPP_
#define DDFLOW_TRAIN_CONFIG_HPP_

#include "ddflow/data/synthetic.hpp"
#include "ddflow/net/flow_net.hpp"
#include "ddflow/train/adam.hpp"
#include "ddflow/train/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace ddflow {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Fully resolved training configuration.
struct RunConfig {
  NetConfig net;
  OptimizerConfig optim;
  SchedulePlan plan;
  /// "synthetic" renders a fresh scene per index; "dir" reads a dataset written by gen-data.
  std::string data_source = "synthetic";
  std::string data_dir;
  std::uint64_t data_seed = 1;
  /// Synthetic pool size; 0 streams an unbounded sequence of scenes.
  std::uint64_t data_count = 0;
  SyntheticConfig synthetic;
  std::uint64_t checkpoint_interval = 1000;

  void validate() const;
};

/// Every recognised key in canonical order.
std::vector<std::string> config_keys();

/// Sets one key. Throws ConfigError naming the key when it is unknown or the value does not parse.
void apply_setting(RunConfig& config, const std::string& key, const std::string& value);

/// `key = value` lines; '#' starts a comment; blank lines are ignored.
RunConfig parse_config(const std::string& text, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});

/// Canonical text listing every key; parse_config(to_config_text(c)) reproduces c.
std::string to_config_text(const RunConfig& config);

/// Training frames described by the data.* keys.
std::shared_ptr<const PairSource> make_source(const RunConfig& config);

}  // namespace ddflow

#endif  // DDFLOW_TRAIN_CONFIG_HPP_
