#include "protoset/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace protoset {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_value(const std::string& key, const std::string& value) {
  T out{};
  const char* first = value.data();
  const char* last = value.data() + value.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last || value.empty()) {
    throw ConfigError("config key '" + key + "': invalid value '" + value + "'");
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return {buf, end};
}

}  // namespace

KeyValues parse_key_values(const std::string& text) {
  KeyValues kv;
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line(raw);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(line_no, "expected key=value");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (key.empty()) throw ParseError(line_no, "empty key");
    if (!kv.emplace(std::string(key), std::string(value)).second) {
      throw ParseError(line_no, "duplicate key '" + std::string(key) + "'");
    }
  }
  return kv;
}

KeyValues load_key_values(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_key_values(ss.str());
}

void apply_config(const KeyValues& kv, TrainConfig& train, SynthConfig& synth) {
  using Setter = std::function<void(const std::string&, const std::string&)>;
  auto set_int = [](int& field) -> Setter {
    return [&field](const std::string& k, const std::string& v) { field = parse_value<int>(k, v); };
  };
  auto set_double = [](double& field) -> Setter {
    return [&field](const std::string& k, const std::string& v) { field = parse_value<double>(k, v); };
  };
  auto set_u64 = [](std::uint64_t& field) -> Setter {
    return [&field](const std::string& k, const std::string& v) { field = parse_value<std::uint64_t>(k, v); };
  };

  const std::map<std::string, Setter> setters{
      {"r", set_int(train.r)},
      {"k", set_int(train.k)},
      {"beta", set_double(train.beta)},
      {"tau", set_double(train.tau)},
      {"lambda", set_double(train.lambda)},
      {"lr", set_double(train.lr)},
      {"momentum", set_double(train.momentum)},
      {"weight_decay", set_double(train.weight_decay)},
      {"epochs", set_int(train.epochs)},
      {"seed",
       [&](const std::string& k, const std::string& v) {
         train.seed = parse_value<std::uint64_t>(k, v);
         synth.seed = train.seed;
       }},
      {"d_in",
       [&](const std::string& k, const std::string& v) {
         train.d_in = parse_value<int>(k, v);
         synth.d_in = train.d_in;
       }},
      {"d", set_int(train.d)},
      {"hidden", set_int(train.hidden)},
      {"eps_mass", set_double(train.eps_mass)},
      {"jitter", set_double(train.jitter)},
      {"layers", set_int(train.layers)},
      {"batch", set_int(train.batch)},
      {"pairs_per_epoch", set_int(train.pairs_per_epoch)},
      {"genuine_fraction", set_double(train.genuine_fraction)},
      {"lr_drop_iter",
       [&](const std::string& k, const std::string& v) { train.lr_drop_iter = parse_value<std::int64_t>(k, v); }},
      {"lr_drop_factor", set_double(train.lr_drop_factor)},
      {"balance",
       [&](const std::string& k, const std::string& v) {
         if (v == "per_pair") {
           train.balance = BalanceMode::per_pair;
         } else if (v == "per_epoch") {
           train.balance = BalanceMode::per_epoch;
         } else {
           throw ConfigError("config key '" + k + "': expected per_pair or per_epoch, got '" + v + "'");
         }
       }},
      {"init_std", set_double(train.init_std)},
      {"predictor_init_std", set_double(train.predictor_init_std)},
      {"gate_init_std", set_double(train.gate_init_std)},
      {"subjects", set_int(synth.n_subjects)},
      {"modes", set_int(synth.modes_per_subject)},
      {"sets_per_subject", set_int(synth.sets_per_subject)},
      {"min_media", set_int(synth.min_media)},
      {"max_media", set_int(synth.max_media)},
      {"mode_noise", set_double(synth.mode_noise)},
      {"mode_offset", set_double(synth.mode_offset)},
      {"mode_sharing", set_double(synth.mode_sharing)},
      {"condition_seed", set_u64(synth.condition_seed)},
      {"video_fraction", set_double(synth.video_fraction)},
  };

  for (const auto& [key, value] : kv) {
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second(key, value);
  }
}

std::string to_key_values(const TrainConfig& cfg) {
  std::string out;
  auto put = [&out](const char* key, const std::string& value) {
    out += key;
    out += '=';
    out += value;
    out += '\n';
  };
  put("r", std::to_string(cfg.r));
  put("k", std::to_string(cfg.k));
  put("beta", format_double(cfg.beta));
  put("tau", format_double(cfg.tau));
  put("lambda", format_double(cfg.lambda));
  put("lr", format_double(cfg.lr));
  put("lr_drop_iter", std::to_string(cfg.lr_drop_iter));
  put("lr_drop_factor", format_double(cfg.lr_drop_factor));
  put("momentum", format_double(cfg.momentum));
  put("weight_decay", format_double(cfg.weight_decay));
  put("epochs", std::to_string(cfg.epochs));
  put("pairs_per_epoch", std::to_string(cfg.pairs_per_epoch));
  put("batch", std::to_string(cfg.batch));
  put("genuine_fraction", format_double(cfg.genuine_fraction));
  put("seed", std::to_string(cfg.seed));
  put("d_in", std::to_string(cfg.d_in));
  put("hidden", std::to_string(cfg.hidden));
  put("d", std::to_string(cfg.d));
  put("layers", std::to_string(cfg.layers));
  put("eps_mass", format_double(cfg.eps_mass));
  put("jitter", format_double(cfg.jitter));
  put("balance", cfg.balance == BalanceMode::per_pair ? "per_pair" : "per_epoch");
  put("init_std", format_double(cfg.init_std));
  put("predictor_init_std", format_double(cfg.predictor_init_std));
  put("gate_init_std", format_double(cfg.gate_init_std));
  return out;
}

}  // namespace protoset
