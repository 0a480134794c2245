#include "inbed/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "inbed/archive.hpp"

namespace inbed {

namespace {

using L = std::vector<double>;
using IL = std::vector<std::int64_t>;
using I = std::int64_t;

std::vector<SchemaKey> build_schema() {
  const double pitch = 2.1 / 64.0;
  return {
      {"run.output_dir", ValueType::string, std::string("runs/default"), "artifact root (env INBED_OUTPUT_ROOT overrides)"},
      {"run.seed", ValueType::integer, I{0}, "base seed for data generation and training"},

      {"scene.camera_height", ValueType::real, 2.0, "camera plane height above the floor (m)"},
      {"scene.bed_surface_height", ValueType::real, 0.5, "mattress surface height (m)"},
      {"scene.bed_length", ValueType::real, 2.1, "bed extent along the body (m)"},
      {"scene.bed_width", ValueType::real, 1.05, "bed extent across the body (m)"},
      {"scene.pixel_pitch", ValueType::real, pitch, "ground size of one pixel (m)"},
      {"scene.image_height", ValueType::integer, I{64}, "depth image rows"},
      {"scene.image_width", ValueType::integer, I{32}, "depth image columns"},

      {"body.template", ValueType::string, std::string("toy"), "toy | file"},
      {"body.n_vertices", ValueType::integer, I{240}, "toy template vertex count"},
      {"body.seed", ValueType::integer, I{0}, "toy template seed"},
      {"body.path", ValueType::string, std::string(""), "template archive when body.template = file"},

      {"data.n_synthetic", ValueType::integer, I{5000}, "synthetic training samples"},
      {"data.n_real_train", ValueType::integer, I{400}, "pseudo-real training samples"},
      {"data.n_real_test", ValueType::integer, I{200}, "pseudo-real test samples"},
      {"data.n_train_participants", ValueType::integer, I{80}, "pseudo-real training participants"},
      {"data.n_test_participants", ValueType::integer, I{22}, "pseudo-real test participants (disjoint)"},
      {"data.beta_range", ValueType::real, 2.0, "shape coefficients drawn from [-r, r]"},
      {"data.lateral_probability", ValueType::real, 0.4, "probability of a side-lying pose"},

      {"shift.noise_std", ValueType::real, 0.005, "pseudo-real sensor noise (m)"},
      {"shift.bias_max", ValueType::real, 0.03, "per-participant bias drawn from [-b, b] (m)"},
      {"shift.blur", ValueType::real, 1.0, "blend weight of the one-pixel blur"},
      {"shift.sag", ValueType::real, 0.08, "mattress sag at the bed centre (m)"},
      {"shift.scale", ValueType::real, 0.05, "relative depth-scale error"},

      {"augment.p_rotate", ValueType::real, 0.5, "probability of a random rotation"},
      {"augment.max_rotate_deg", ValueType::real, 15.0, "rotation range (degrees)"},
      {"augment.p_erase", ValueType::real, 0.5, "probability of a random erase"},
      {"augment.max_erase_fraction", ValueType::real, 0.2, "largest erased area fraction"},
      {"augment.p_noise", ValueType::real, 0.5, "probability of additive noise"},
      {"augment.max_noise_std", ValueType::real, 0.01, "largest noise std (m)"},
      {"augment.rotate_labels", ValueType::boolean, false, "counter-rotate ground truth with the image"},

      {"model.n_down_blocks", ValueType::integer, I{6}, "stride-2 residual blocks"},
      {"model.n_attention_blocks", ValueType::integer, I{3}, "attention blocks before the last residual blocks"},
      {"model.base_channels", ValueType::integer, I{8}, "channels after the first convolution"},
      {"model.latent_dim", ValueType::integer, I{64}, "time/SMPL latent width"},
      {"model.regressor_hidden", ValueType::integer, I{128}, "regressor hidden width"},
      {"model.include_gender", ValueType::boolean, false, "feed the gender flag to the SMPL encoder"},
      {"model.depth_scale", ValueType::real, 0.1, "input encoding scale (m)"},

      {"diffusion.T", ValueType::integer, I{100}, "diffusion timesteps"},
      {"diffusion.beta_start", ValueType::real, 1e-4, "first sigma_t^2"},
      {"diffusion.beta_end", ValueType::real, 0.2, "last sigma_t^2"},

      {"train.lr_init", ValueType::real, 1e-4, "synthetic-stage learning rate (fixed)"},
      {"train.weight_decay", ValueType::real, 5e-4, "decoupled weight decay"},
      {"train.batch_size", ValueType::integer, I{32}, "batch size"},
      {"train.steps_total", ValueType::integer, I{20000}, "synthetic-stage steps"},
      {"train.lambda_v2v", ValueType::real, 1.0, "vertex loss weight"},
      {"train.adam_beta1", ValueType::real, 0.9, "first-moment decay"},
      {"train.adam_beta2", ValueType::real, 0.999, "second-moment decay"},
      {"train.adam_eps", ValueType::real, 1e-8, "Adam epsilon"},

      {"finetune.lr_init", ValueType::real, 1e-4, "fine-tune initial learning rate (linear decay)"},
      {"finetune.weight_decay", ValueType::real, 5e-4, "decoupled weight decay"},
      {"finetune.batch_size", ValueType::integer, I{32}, "batch size"},
      {"finetune.epochs", ValueType::integer, I{50}, "epochs over the real subset"},
      {"finetune.fraction", ValueType::real, 1.0, "fraction of the real training set used"},

      {"scratch.lr_init", ValueType::real, 1e-4, "scratch-baseline initial learning rate"},
      {"scratch.epochs", ValueType::integer, I{50}, "scratch-baseline epochs"},

      {"eval.ddim_steps", ValueType::integer, I{5}, "DDIM sampling steps"},
      {"eval.seed", ValueType::integer, I{0}, "evaluation seed"},

      {"experiment.seeds", ValueType::integer_list, IL{0, 1, 2}, "training seeds"},
      {"experiment.fractions", ValueType::real_list, L{0.1, 0.25, 0.5, 1.0}, "real-data fractions"},
  };
}

const char* type_name(ValueType t) {
  switch (t) {
    case ValueType::integer: return "int";
    case ValueType::real: return "float";
    case ValueType::boolean: return "bool";
    case ValueType::string: return "string";
    case ValueType::real_list: return "float-list";
    case ValueType::integer_list: return "int-list";
  }
  return "?";
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Strips a trailing comment that is not inside a string literal.
std::string strip_comment(const std::string& s) {
  bool in_str = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"') in_str = !in_str;
    if (s[i] == '#' && !in_str) return s.substr(0, i);
  }
  return s;
}

bool parse_int(const std::string& s, std::int64_t& out) {
  const char* b = s.data();
  const char* e = b + s.size();
  if (b != e && *b == '+') ++b;
  const auto r = std::from_chars(b, e, out);
  return r.ec == std::errc() && r.ptr == e && b != e;
}

bool parse_real(const std::string& s, double& out) {
  if (s.empty()) return false;
  std::istringstream in(s);
  in.imbue(std::locale::classic());
  in >> out;
  return !in.fail() && in.peek() == std::char_traits<char>::eof() && std::isfinite(out);
}

std::vector<std::string> split_list(const std::string& lit, const std::string& where) {
  if (lit.size() < 2 || lit.front() != '[' || lit.back() != ']')
    throw ConfigError(where + ": expected a [list]");
  std::vector<std::string> items;
  std::string body = trim(lit.substr(1, lit.size() - 2));
  if (body.empty()) return items;
  std::stringstream ss(body);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) throw ConfigError(where + ": empty list element");
    items.push_back(item);
  }
  return items;
}

}  // namespace

const std::vector<SchemaKey>& config_schema() {
  static const std::vector<SchemaKey> schema = build_schema();
  return schema;
}

std::string format_value(const ConfigValue& v) {
  std::ostringstream o;
  o.imbue(std::locale::classic());
  o << std::setprecision(17);
  std::visit(
      [&](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, bool>) {
          o << (x ? "true" : "false");
        } else if constexpr (std::is_same_v<T, std::string>) {
          o << '"' << x << '"';
        } else if constexpr (std::is_same_v<T, std::vector<double>> || std::is_same_v<T, std::vector<std::int64_t>>) {
          o << '[';
          for (std::size_t i = 0; i < x.size(); ++i) o << (i ? ", " : "") << x[i];
          o << ']';
        } else {
          o << x;
        }
      },
      v);
  return o.str();
}

std::string schema_help() {
  std::ostringstream o;
  o << "Configuration keys (section.key  type  default):\n";
  for (const auto& k : config_schema())
    o << "  " << std::left << std::setw(30) << k.key << std::setw(11) << type_name(k.type) << std::setw(16)
      << format_value(k.default_value) << ' ' << k.help << '\n';
  return o.str();
}

ConfigValue parse_value(const std::string& raw, ValueType type, const std::string& where) {
  const std::string lit = trim(raw);
  switch (type) {
    case ValueType::integer: {
      std::int64_t v;
      if (!parse_int(lit, v)) throw ConfigError(where + ": expected an integer, got '" + lit + "'");
      return v;
    }
    case ValueType::real: {
      double v;
      if (!parse_real(lit, v)) throw ConfigError(where + ": expected a number, got '" + lit + "'");
      return v;
    }
    case ValueType::boolean:
      if (lit == "true") return true;
      if (lit == "false") return false;
      throw ConfigError(where + ": expected true or false, got '" + lit + "'");
    case ValueType::string:
      if (lit.size() >= 2 && lit.front() == '"' && lit.back() == '"') return lit.substr(1, lit.size() - 2);
      if (lit.find_first_of("\"[]=") != std::string::npos || lit.empty())
        throw ConfigError(where + ": expected a \"string\", got '" + lit + "'");
      return lit;  // bare word, convenient on the command line
    case ValueType::real_list: {
      std::vector<double> out;
      for (const auto& it : split_list(lit, where)) {
        double v;
        if (!parse_real(it, v)) throw ConfigError(where + ": list element '" + it + "' is not a number");
        out.push_back(v);
      }
      return out;
    }
    case ValueType::integer_list: {
      std::vector<std::int64_t> out;
      for (const auto& it : split_list(lit, where)) {
        std::int64_t v;
        if (!parse_int(it, v)) throw ConfigError(where + ": list element '" + it + "' is not an integer");
        out.push_back(v);
      }
      return out;
    }
  }
  throw ConfigError(where + ": unsupported type");
}

Config::Config() {
  for (const auto& k : config_schema()) values_[k.key] = k.default_value;
}

const SchemaKey& Config::schema_for(const std::string& key, const std::string& origin) const {
  for (const auto& k : config_schema())
    if (k.key == key) return k;
  throw ConfigError(origin + ": unknown configuration key '" + key + "'");
}

void Config::set(const std::string& key, const std::string& literal, const std::string& origin) {
  const SchemaKey& k = schema_for(key, origin);
  values_[key] = parse_value(literal, k.type, origin + " (" + key + ")");
}

void Config::merge_text(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = origin + ":" + std::to_string(lineno);
    const std::string s = trim(strip_comment(line));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']' || s.size() < 3) throw ConfigError(where + ": malformed section header");
      section = trim(s.substr(1, s.size() - 2));
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    const std::string name = trim(s.substr(0, eq));
    if (name.empty()) throw ConfigError(where + ": missing key");
    const std::string key = section.empty() ? name : section + "." + name;
    set(key, s.substr(eq + 1), where);
  }
}

void Config::merge_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw io::IoError("cannot open config file '" + path.string() + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  merge_text(ss.str(), path.string());
}

void Config::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1), "override");
}

const ConfigValue& Config::value(const std::string& key, ValueType type) const {
  const SchemaKey& k = schema_for(key, "lookup");
  if (k.type != type) throw ConfigError("key '" + key + "' is " + type_name(k.type) + ", not " + type_name(type));
  return values_.at(key);
}

std::int64_t Config::get_int(const std::string& key) const {
  return std::get<std::int64_t>(value(key, ValueType::integer));
}
double Config::get_real(const std::string& key) const { return std::get<double>(value(key, ValueType::real)); }
bool Config::get_bool(const std::string& key) const { return std::get<bool>(value(key, ValueType::boolean)); }
const std::string& Config::get_string(const std::string& key) const {
  return std::get<std::string>(value(key, ValueType::string));
}
std::vector<double> Config::get_real_list(const std::string& key) const {
  return std::get<std::vector<double>>(value(key, ValueType::real_list));
}
std::vector<std::int64_t> Config::get_int_list(const std::string& key) const {
  return std::get<std::vector<std::int64_t>>(value(key, ValueType::integer_list));
}

std::string Config::canonical() const {
  std::ostringstream o;
  for (const auto& [k, v] : values_) o << k << " = " << format_value(v) << '\n';
  return o.str();
}

std::string Config::digest() const { return io::hex64(io::fnv1a(canonical())); }

nlohmann::json Config::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : values_) std::visit([&](const auto& x) { j[k] = x; }, v);
  return j;
}

}  // namespace inbed
