#include "flanet/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace flanet {
namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

template <typename N>
N parse_number(const std::string& key, const std::string& value) {
  N out{};
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw ConfigError("invalid number for " + key + ": '" + value + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError("invalid boolean for " + key + ": '" + value + "'");
}

ChannelSchedule parse_schedule(const std::string& key, const std::string& value) {
  ChannelSchedule out{};
  std::stringstream ss(value);
  std::string item;
  size_t i = 0;
  while (std::getline(ss, item, ',')) {
    if (i >= out.size()) throw ConfigError(key + " needs exactly 4 comma-separated widths");
    out[i++] = parse_number<int64_t>(key, trim(item));
  }
  if (i != out.size()) throw ConfigError(key + " needs exactly 4 comma-separated widths");
  return out;
}

std::string format_schedule(const ChannelSchedule& s) {
  return std::to_string(s[0]) + "," + std::to_string(s[1]) + "," + std::to_string(s[2]) + "," +
         std::to_string(s[3]);
}

std::string format_double(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

using Setter = std::function<void(TrainConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"learning_rate", [](auto& c, auto& k, auto& v) { c.learning_rate = parse_number<double>(k, v); }},
      {"epochs", [](auto& c, auto& k, auto& v) { c.epochs = parse_number<int>(k, v); }},
      {"batch_size", [](auto& c, auto& k, auto& v) { c.batch_size = parse_number<int>(k, v); }},
      {"input_size", [](auto& c, auto& k, auto& v) { c.input_size = parse_number<int>(k, v); }},
      {"sigma", [](auto& c, auto& k, auto& v) { c.sigma = parse_number<double>(k, v); }},
      {"alpha", [](auto& c, auto& k, auto& v) { c.alpha = parse_number<double>(k, v); }},
      {"lambda_heatmap", [](auto& c, auto& k, auto& v) { c.weights.heatmap = parse_number<double>(k, v); }},
      {"lambda_bce", [](auto& c, auto& k, auto& v) { c.weights.bce = parse_number<double>(k, v); }},
      {"lambda_iou", [](auto& c, auto& k, auto& v) { c.weights.iou = parse_number<double>(k, v); }},
      {"no_ffa", [](auto& c, auto& k, auto& v) { c.no_ffa = parse_bool(k, v); }},
      {"no_loc_branch", [](auto& c, auto& k, auto& v) { c.no_loc_branch = parse_bool(k, v); }},
      {"no_contrastive", [](auto& c, auto& k, auto& v) { c.no_contrastive = parse_bool(k, v); }},
      {"gt_negatives", [](auto& c, auto& k, auto& v) { c.gt_negatives = parse_bool(k, v); }},
      {"seed", [](auto& c, auto& k, auto& v) { c.seed = parse_number<uint64_t>(k, v); }},
      {"encoder_channels", [](auto& c, auto& k, auto& v) { c.encoder_channels = parse_schedule(k, v); }},
      {"decoder_channels", [](auto& c, auto& k, auto& v) { c.decoder_channels = parse_schedule(k, v); }},
      {"norm_groups", [](auto& c, auto& k, auto& v) { c.norm_groups = parse_number<int>(k, v); }},
      {"max_steps", [](auto& c, auto& k, auto& v) { c.max_steps = parse_number<int>(k, v); }},
      {"val_interval", [](auto& c, auto& k, auto& v) { c.val_interval = parse_number<int>(k, v); }},
      {"threshold", [](auto& c, auto& k, auto& v) { c.threshold = parse_number<double>(k, v); }},
      {"data_root", [](auto& c, auto&, auto& v) { c.data_root = v; }},
      {"output_dir", [](auto& c, auto&, auto& v) { c.output_dir = v; }},
      {"device", [](auto& c, auto&, auto& v) { c.device = v; }},
  };
  return table;
}

}  // namespace

TrainConfig TrainConfig::desk() {
  TrainConfig c;
  c.batch_size = 4;
  c.input_size = 64;
  c.epochs = 20;
  return c;
}

NetworkConfig TrainConfig::network() const {
  NetworkConfig n;
  n.encoder_channels = encoder_channels;
  n.decoder_channels = decoder_channels;
  n.norm_groups = norm_groups;
  n.use_ffa = !no_ffa;
  n.use_loc_branch = !no_loc_branch;
  return n;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0)) throw ConfigError("learning_rate must be > 0");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (input_size < 32 || input_size % 32 != 0) {
    throw ConfigError("input_size must be a positive multiple of 32");
  }
  if (!(sigma > 0)) throw ConfigError("sigma must be > 0");
  if (alpha < 0) throw ConfigError("alpha must be >= 0");
  if (norm_groups < 1) throw ConfigError("norm_groups must be >= 1");
  if (max_steps < 0 || val_interval < 1) throw ConfigError("invalid max_steps / val_interval");
  if (!(threshold > 0 && threshold < 1)) throw ConfigError("threshold must be in (0, 1)");
  if (contrastive_enabled() && batch_size < 3) {
    throw ConfigError("the contrastive loss needs batch_size >= 3 (two videos per batch)");
  }
}

TrainConfig parse_config(std::string_view text, TrainConfig base) {
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const std::string content = trim(line);
    if (content.empty()) continue;
    const auto eq = content.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(std::string_view(content).substr(0, eq));
    const std::string value = trim(std::string_view(content).substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError("unknown config key: " + key);
    it->second(base, key, value);
  }
  return base;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string format_config(const TrainConfig& c) {
  std::ostringstream out;
  out << "learning_rate = " << format_double(c.learning_rate) << '\n'
      << "epochs = " << c.epochs << '\n'
      << "batch_size = " << c.batch_size << '\n'
      << "input_size = " << c.input_size << '\n'
      << "sigma = " << format_double(c.sigma) << '\n'
      << "alpha = " << format_double(c.alpha) << '\n'
      << "lambda_heatmap = " << format_double(c.weights.heatmap) << '\n'
      << "lambda_bce = " << format_double(c.weights.bce) << '\n'
      << "lambda_iou = " << format_double(c.weights.iou) << '\n'
      << "no_ffa = " << (c.no_ffa ? "true" : "false") << '\n'
      << "no_loc_branch = " << (c.no_loc_branch ? "true" : "false") << '\n'
      << "no_contrastive = " << (c.no_contrastive ? "true" : "false") << '\n'
      << "gt_negatives = " << (c.gt_negatives ? "true" : "false") << '\n'
      << "seed = " << c.seed << '\n'
      << "encoder_channels = " << format_schedule(c.encoder_channels) << '\n'
      << "decoder_channels = " << format_schedule(c.decoder_channels) << '\n'
      << "norm_groups = " << c.norm_groups << '\n'
      << "max_steps = " << c.max_steps << '\n'
      << "val_interval = " << c.val_interval << '\n'
      << "threshold = " << format_double(c.threshold) << '\n'
      << "data_root = " << c.data_root << '\n'
      << "output_dir = " << c.output_dir << '\n'
      << "device = " << c.device << '\n';
  return out.str();
}

std::string config_hash(const TrainConfig& config) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : format_config(config)) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string resolve_device(const std::string& configured) {
  std::string device = configured.empty() ? "cpu" : configured;
  if (const char* env = std::getenv("FLANET_DEVICE"); env && *env) device = env;
  if (device != "cpu") throw ConfigError("unsupported device '" + device + "' (only cpu)");
  return device;
}

}  // namespace flanet
