#include "iiao/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace iiao::config {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::string join(const std::vector<std::string>& items, const char* sep = "\n  ") {
  std::string out;
  for (const auto& e : items) out += sep + e;
  return out;
}

// Drops a trailing '#' comment that is not inside double quotes.
std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

std::string unquote(const std::string& v) {
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return v.substr(1, v.size() - 2);
  return v;
}

// "[a, b]" or "a,b" -> {"a", "b"}
std::vector<std::string> split_list(std::string v) {
  if (v.size() >= 2 && v.front() == '[' && v.back() == ']') v = v.substr(1, v.size() - 2);
  std::vector<std::string> items;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = unquote(trim(item));
    if (!item.empty()) items.push_back(item);
  }
  return items;
}

template <typename T>
bool parse_number(const std::string& s, T& out) {
  if constexpr (std::is_floating_point_v<T>) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size()) return false;
    out = static_cast<T>(v);
    return true;
  } else {
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size();
  }
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Field {
  std::function<std::string(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T, typename Access>
Field number(Access access) {
  return {[access](RunConfig& c, const std::string& v) -> std::string {
            T parsed{};
            if (!parse_number(v, parsed)) return "expected a number, got '" + v + "'";
            access(c) = parsed;
            return {};
          },
          [access](const RunConfig& c) -> std::string {
            const T v = access(const_cast<RunConfig&>(c));
            if constexpr (std::is_floating_point_v<T>)
              return fmt_double(v);
            else
              return std::to_string(v);
          }};
}

template <typename Access>
Field text(Access access) {
  return {[access](RunConfig& c, const std::string& v) -> std::string {
            access(c) = v;
            return {};
          },
          [access](const RunConfig& c) { return "\"" + access(const_cast<RunConfig&>(c)) + "\""; }};
}

Field boolean(std::function<bool&(RunConfig&)> access) {
  return {[access](RunConfig& c, const std::string& v) -> std::string {
            if (v == "true") access(c) = true;
            else if (v == "false") access(c) = false;
            else return "expected true or false, got '" + v + "'";
            return {};
          },
          [access](const RunConfig& c) -> std::string {
            return access(const_cast<RunConfig&>(c)) ? "true" : "false";
          }};
}

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = [] {
    std::vector<std::pair<std::string, Field>> t;
    // model
    t.emplace_back("model.base_channels", number<int>([](RunConfig& c) -> int& { return c.model.base_channels; }));
    t.emplace_back("model.reduction_ratio", number<int>([](RunConfig& c) -> int& { return c.model.reduction_ratio; }));
    t.emplace_back("model.iiao_stack", number<int>([](RunConfig& c) -> int& { return c.model.iiao_stack; }));
    t.emplace_back("model.encoder_widths",
                   Field{[](RunConfig& c, const std::string& v) -> std::string {
                           std::vector<int> widths;
                           for (const auto& item : split_list(v)) {
                             int w = 0;
                             if (!parse_number(item, w)) return "expected integers, got '" + item + "'";
                             widths.push_back(w);
                           }
                           c.model.encoder_widths = widths;
                           return {};
                         },
                         [](const RunConfig& c) {
                           std::string s = "[";
                           for (std::size_t i = 0; i < c.model.encoder_widths.size(); ++i)
                             s += (i ? ", " : "") + std::to_string(c.model.encoder_widths[i]);
                           return s + "]";
                         }});
    t.emplace_back("model.asp_kernels",
                   Field{[](RunConfig& c, const std::string& v) -> std::string {
                           std::vector<std::pair<int, int>> kernels;
                           for (const auto& item : split_list(v)) {
                             const auto x = item.find('x');
                             int a = 0, b = 0;
                             if (x == std::string::npos || !parse_number(item.substr(0, x), a) ||
                                 !parse_number(item.substr(x + 1), b))
                               return "expected kernel pairs like \"1x3\", got '" + item + "'";
                             kernels.emplace_back(a, b);
                           }
                           c.model.asp_kernels = kernels;
                           return {};
                         },
                         [](const RunConfig& c) {
                           std::string s = "[";
                           for (std::size_t i = 0; i < c.model.asp_kernels.size(); ++i)
                             s += std::string(i ? ", " : "") + "\"" + std::to_string(c.model.asp_kernels[i].first) +
                                  "x" + std::to_string(c.model.asp_kernels[i].second) + "\"";
                           return s + "]";
                         }});
    t.emplace_back("model.encoder_init",
                   Field{[](RunConfig& c, const std::string& v) -> std::string {
                           if (v == "he") c.model.encoder_init = model::EncoderInit::he;
                           else if (v == "gaussian") c.model.encoder_init = model::EncoderInit::gaussian;
                           else return "expected he or gaussian, got '" + v + "'";
                           return {};
                         },
                         [](const RunConfig& c) -> std::string {
                           return c.model.encoder_init == model::EncoderInit::he ? "\"he\"" : "\"gaussian\"";
                         }});
    t.emplace_back("model.init_std", number<double>([](RunConfig& c) -> double& { return c.model.init_std; }));
    t.emplace_back("model.seed", number<std::uint64_t>([](RunConfig& c) -> std::uint64_t& { return c.model.seed; }));
    // train
    t.emplace_back("train.crop", number<int>([](RunConfig& c) -> int& { return c.train.crop; }));
    t.emplace_back("train.flip_p", number<double>([](RunConfig& c) -> double& { return c.train.flip_p; }));
    t.emplace_back("train.gray_p", number<double>([](RunConfig& c) -> double& { return c.train.gray_p; }));
    t.emplace_back("train.lr0", number<double>([](RunConfig& c) -> double& { return c.train.lr0; }));
    t.emplace_back("train.halve_every", number<int>([](RunConfig& c) -> int& { return c.train.halve_every; }));
    t.emplace_back("train.adam_beta1", number<double>([](RunConfig& c) -> double& { return c.train.adam_beta1; }));
    t.emplace_back("train.adam_beta2", number<double>([](RunConfig& c) -> double& { return c.train.adam_beta2; }));
    t.emplace_back("train.adam_eps", number<double>([](RunConfig& c) -> double& { return c.train.adam_eps; }));
    t.emplace_back("train.batch_size", number<int>([](RunConfig& c) -> int& { return c.train.batch_size; }));
    t.emplace_back("train.epochs", number<int>([](RunConfig& c) -> int& { return c.train.epochs; }));
    t.emplace_back("train.seed", number<std::uint64_t>([](RunConfig& c) -> std::uint64_t& { return c.train.seed; }));
    t.emplace_back("train.grad_clip", number<double>([](RunConfig& c) -> double& { return c.train.grad_clip; }));
    // loss
    t.emplace_back("loss.window_k", number<int>([](RunConfig& c) -> int& { return c.loss.window_k; }));
    t.emplace_back("loss.stride_s", number<int>([](RunConfig& c) -> int& { return c.loss.stride_s; }));
    t.emplace_back("loss.threshold", number<double>([](RunConfig& c) -> double& { return c.loss.threshold; }));
    t.emplace_back("loss.lambda", number<double>([](RunConfig& c) -> double& { return c.loss.lambda; }));
    t.emplace_back("loss.gamma", number<double>([](RunConfig& c) -> double& { return c.loss.gamma; }));
    // labels
    t.emplace_back("labels.mode",
                   Field{[](RunConfig& c, const std::string& v) -> std::string {
                           if (v == "fixed") c.labels.mode = densitymap::LabelMode::fixed;
                           else if (v == "adaptive") c.labels.mode = densitymap::LabelMode::adaptive;
                           else return "expected fixed or adaptive, got '" + v + "'";
                           return {};
                         },
                         [](const RunConfig& c) -> std::string {
                           return c.labels.mode == densitymap::LabelMode::fixed ? "\"fixed\"" : "\"adaptive\"";
                         }});
    t.emplace_back("labels.sigma", number<double>([](RunConfig& c) -> double& { return c.labels.sigma; }));
    t.emplace_back("labels.k", number<int>([](RunConfig& c) -> int& { return c.labels.adaptive.k; }));
    t.emplace_back("labels.beta", number<double>([](RunConfig& c) -> double& { return c.labels.adaptive.beta; }));
    t.emplace_back("labels.sigma_min", number<double>([](RunConfig& c) -> double& { return c.labels.adaptive.sigma_min; }));
    t.emplace_back("labels.sigma_max", number<double>([](RunConfig& c) -> double& { return c.labels.adaptive.sigma_max; }));
    // eval
    t.emplace_back("eval.levels",
                   Field{[](RunConfig& c, const std::string& v) -> std::string {
                           std::vector<double> bounds;
                           for (const auto& item : split_list(v)) {
                             double b = 0;
                             if (!parse_number(item, b)) return "expected numbers, got '" + item + "'";
                             bounds.push_back(b);
                           }
                           c.eval.level_bounds = bounds;
                           return {};
                         },
                         [](const RunConfig& c) {
                           std::string s = "[";
                           for (std::size_t i = 0; i < c.eval.level_bounds.size(); ++i)
                             s += (i ? ", " : "") + fmt_double(c.eval.level_bounds[i]);
                           return s + "]";
                         }});
    t.emplace_back("eval.rescale_large", boolean([](RunConfig& c) -> bool& { return c.eval.rescale_large; }));
    // paths
    t.emplace_back("paths.train_data", text([](RunConfig& c) -> std::string& { return c.paths.train_data; }));
    t.emplace_back("paths.test_data", text([](RunConfig& c) -> std::string& { return c.paths.test_data; }));
    t.emplace_back("paths.out", text([](RunConfig& c) -> std::string& { return c.paths.out; }));
    return t;
  }();
  return table;
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> errors)
    : std::runtime_error("invalid configuration:" + join(errors)), errors_(std::move(errors)) {}

std::vector<std::string> known_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, f] : fields()) keys.push_back(k);
  return keys;
}

std::string set(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& [k, f] : fields())
    if (k == key) {
      const std::string err = f.set(cfg, unquote(trim(value)));
      return err.empty() ? err : key + ": " + err;
    }
  return "unknown key '" + key + "'";
}

void parse_into(RunConfig& cfg, const std::string& text, std::vector<std::string>& errors,
                const std::string& origin) {
  std::istringstream in(text);
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(strip_comment(line));
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(lineno) + ": ";
    if (line.front() == '[' && line.back() == ']' && line.find('=') == std::string::npos) {
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      errors.push_back(where + "expected 'key = value', got '" + line + "'");
      continue;
    }
    std::string key = trim(line.substr(0, eq));
    if (!section.empty()) key = section + "." + key;
    const std::string err = set(cfg, key, line.substr(eq + 1));
    if (!err.empty()) errors.push_back(where + err);
  }
}

std::vector<std::string> RunConfig::validate() const {
  std::vector<std::string> errors = model.validate();
  for (auto& e : train.validate()) errors.push_back(e);
  for (auto& e : loss.validate()) errors.push_back(e);
  for (auto& e : labels.validate()) errors.push_back(e);
  for (std::size_t i = 0; i < eval.level_bounds.size(); ++i)
    if (!(eval.level_bounds[i] >= 0.0) || (i > 0 && !(eval.level_bounds[i] > eval.level_bounds[i - 1])))
      errors.push_back("eval.levels must be non-negative and strictly increasing");
  if (eval.level_bounds.empty()) errors.push_back("eval.levels must not be empty");
  return errors;
}

RunConfig load(const std::filesystem::path& file, const std::vector<std::string>& overrides) {
  RunConfig cfg;
  std::vector<std::string> errors;
  if (!file.empty()) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw ConfigError({"cannot open config file " + file.string()});
    std::ostringstream ss;
    ss << in.rdbuf();
    parse_into(cfg, ss.str(), errors, file.string());
  }
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) {
      errors.push_back("override '" + o + "': expected key=value");
      continue;
    }
    const std::string err = set(cfg, trim(o.substr(0, eq)), o.substr(eq + 1));
    if (!err.empty()) errors.push_back("override: " + err);
  }
  for (auto& e : cfg.validate()) errors.push_back(e);
  if (!errors.empty()) throw ConfigError(errors);
  return cfg;
}

std::string to_text(const RunConfig& cfg) {
  std::string out, section;
  for (const auto& [key, f] : fields()) {
    const auto dot = key.find('.');
    const std::string sec = key.substr(0, dot);
    if (sec != section) {
      out += (section.empty() ? "[" : "\n[") + sec + "]\n";
      section = sec;
    }
    out += key.substr(dot + 1) + " = " + f.get(cfg) + "\n";
  }
  return out;
}

}  // namespace iiao::config
