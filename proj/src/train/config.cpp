#include "ddflow/train/config.hpp"

#include "ddflow/data/dataset.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <sstream>

namespace ddflow {
namespace {

struct Key {
  std::string name;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_integer(const std::string& v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw std::invalid_argument("expected an integer");
  return out;
}

double parse_double(const std::string& v) {
  std::size_t used = 0;
  const double d = std::stod(v, &used);
  if (used != v.size() || !std::isfinite(d)) throw std::invalid_argument("expected a finite number");
  return d;
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw std::invalid_argument("expected true or false");
}

std::vector<Index> parse_list(const std::string& v) {
  std::vector<Index> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_integer<Index>(trim(item)));
  if (out.empty()) throw std::invalid_argument("expected a comma-separated list");
  return out;
}

std::string fmt(double d) {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10) << d;
  return os.str();
}
std::string fmt(bool b) { return b ? "true" : "false"; }
std::string fmt(const std::vector<Index>& xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? "," : "") + std::to_string(xs[i]);
  return s;
}

template <typename T, typename Member>
Key integer_key(std::string name, Member member) {
  return {std::move(name), [member](RunConfig& c, const std::string& v) { member(c) = parse_integer<T>(v); },
          [member](const RunConfig& c) { return std::to_string(member(const_cast<RunConfig&>(c))); }};
}

template <typename Member>
Key double_key(std::string name, Member member) {
  return {std::move(name), [member](RunConfig& c, const std::string& v) { member(c) = parse_double(v); },
          [member](const RunConfig& c) { return fmt(member(const_cast<RunConfig&>(c))); }};
}

template <typename Member>
Key bool_key(std::string name, Member member) {
  return {std::move(name), [member](RunConfig& c, const std::string& v) { member(c) = parse_bool(v); },
          [member](const RunConfig& c) { return fmt(bool(member(const_cast<RunConfig&>(c)))); }};
}

template <typename Member>
Key list_key(std::string name, Member member) {
  return {std::move(name), [member](RunConfig& c, const std::string& v) { member(c) = parse_list(v); },
          [member](const RunConfig& c) { return fmt(member(const_cast<RunConfig&>(c))); }};
}

template <typename Member>
Key string_key(std::string name, Member member) {
  return {std::move(name), [member](RunConfig& c, const std::string& v) { member(c) = v; },
          [member](const RunConfig& c) { return member(const_cast<RunConfig&>(c)); }};
}

#define FIELD(expr) [](RunConfig& c) -> decltype(auto) { return (expr); }

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      integer_key<Index>("net.levels", FIELD(c.net.levels)),
      list_key("net.feature_channels", FIELD(c.net.feature_channels)),
      integer_key<Index>("net.correlation_radius", FIELD(c.net.correlation_radius)),
      list_key("net.decoder_hidden", FIELD(c.net.decoder_hidden)),
      double_key("optim.beta1", FIELD(c.optim.beta1)),
      double_key("optim.beta2", FIELD(c.optim.beta2)),
      double_key("optim.epsilon", FIELD(c.optim.adam_epsilon)),
      double_key("optim.lr0", FIELD(c.optim.lr0)),
      integer_key<std::uint64_t>("optim.halving_interval", FIELD(c.optim.halving_interval)),
      integer_key<Index>("optim.batch_size", FIELD(c.optim.batch_size)),
      integer_key<std::uint64_t>("schedule.warmup_steps", FIELD(c.plan.warmup_steps)),
      integer_key<std::uint64_t>("schedule.teacher_steps", FIELD(c.plan.teacher_steps)),
      integer_key<std::uint64_t>("schedule.joint_steps", FIELD(c.plan.joint_steps)),
      double_key("schedule.crop_fraction", FIELD(c.plan.crop_fraction)),
      integer_key<std::uint64_t>("schedule.seed", FIELD(c.plan.seed)),
      bool_key("schedule.census", FIELD(c.plan.census)),
      integer_key<Index>("schedule.census_window", FIELD(c.plan.census_window)),
      bool_key("schedule.occlusion", FIELD(c.plan.occlusion)),
      bool_key("schedule.distillation", FIELD(c.plan.distillation)),
      integer_key<std::uint64_t>("schedule.checkpoint_interval", FIELD(c.checkpoint_interval)),
      double_key("augment.flip_horizontal", FIELD(c.plan.augment.flip_horizontal_prob)),
      double_key("augment.flip_vertical", FIELD(c.plan.augment.flip_vertical_prob)),
      bool_key("augment.channel_swap", FIELD(c.plan.augment.channel_swap)),
      double_key("loss.epsilon", FIELD(c.plan.loss.epsilon)),
      double_key("loss.q", FIELD(c.plan.loss.q)),
      double_key("occlusion.alpha1", FIELD(c.plan.occlusion_params.alpha1)),
      double_key("occlusion.alpha2", FIELD(c.plan.occlusion_params.alpha2)),
      string_key("data.source", FIELD(c.data_source)),
      string_key("data.dir", FIELD(c.data_dir)),
      integer_key<std::uint64_t>("data.seed", FIELD(c.data_seed)),
      integer_key<std::uint64_t>("data.count", FIELD(c.data_count)),
      integer_key<Index>("data.height", FIELD(c.synthetic.height)),
      integer_key<Index>("data.width", FIELD(c.synthetic.width)),
      integer_key<Index>("data.max_shift", FIELD(c.synthetic.max_shift)),
      integer_key<Index>("data.min_sprites", FIELD(c.synthetic.min_sprites)),
      integer_key<Index>("data.max_sprites", FIELD(c.synthetic.max_sprites)),
      integer_key<Index>("data.blur_radius", FIELD(c.synthetic.blur_radius)),
  };
  return table;
}

#undef FIELD

}  // namespace

void RunConfig::validate() const {
  try {
    net.validate();
    optim.validate();
    plan.validate();
    if (data_source == "synthetic") {
      synthetic.validate();
    } else if (data_source == "dir") {
      if (data_dir.empty()) throw std::invalid_argument("data.dir is required when data.source = dir");
    } else {
      throw std::invalid_argument("data.source must be synthetic or dir, got '" + data_source + "'");
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& k : keys()) out.push_back(k.name);
  return out;
}

void apply_setting(RunConfig& config, const std::string& key, const std::string& value) {
  for (const auto& k : keys()) {
    if (k.name != key) continue;
    try {
      k.set(config, value);
    } catch (const std::exception& e) {
      throw ConfigError("bad value '" + value + "' for config key " + key + ": " + e.what());
    }
    return;
  }
  throw ConfigError("unknown config key: " + key);
}

RunConfig parse_config(const std::string& text, RunConfig base) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    apply_setting(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return base;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

std::string to_config_text(const RunConfig& config) {
  std::string out;
  for (const auto& k : keys()) out += k.name + " = " + k.get(config) + "\n";
  return out;
}

std::shared_ptr<const PairSource> make_source(const RunConfig& config) {
  if (config.data_source == "dir") return std::make_shared<InMemoryPairs>(read_dataset(config.data_dir));
  if (config.data_count == 0) return std::make_shared<SyntheticStream>(config.data_seed, config.synthetic);
  return std::make_shared<InMemoryPairs>(gen_synthetic(config.data_seed, Index(config.data_count), config.synthetic));
}

}  // namespace ddflow
