#include "scn/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace scn {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::int64_t parse_int(const std::string& s) {
  std::int64_t v = 0;
  const auto t = trim(s);
  const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || p != t.data() + t.size() || t.empty())
    throw ConfigError("'" + s + "' is not an integer");
  return v;
}

double parse_double(const std::string& s) {
  const auto t = trim(s);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(t, &used);
  } catch (const std::exception&) {
    throw ConfigError("'" + s + "' is not a number");
  }
  if (used != t.size()) throw ConfigError("'" + s + "' is not a number");
  return v;
}

using Check = std::function<void(const std::string&)>;

Check any() {
  return [](const std::string&) {};
}
Check integer(std::int64_t lo, std::int64_t hi = INT64_MAX) {
  return [=](const std::string& s) {
    const auto v = parse_int(s);
    if (v < lo || v > hi)
      throw ConfigError(std::to_string(v) + " is outside [" + std::to_string(lo) + ", " +
                        (hi == INT64_MAX ? std::string("inf") : std::to_string(hi)) + "]");
  };
}
Check number(double lo, double hi) {
  return [=](const std::string& s) {
    const double v = parse_double(s);
    if (!(v >= lo && v <= hi)) throw ConfigError(s + " is outside the allowed range");
  };
}
Check boolean() {
  return [](const std::string& s) { parse_bool(s); };
}
Check one_of(std::vector<std::string> allowed) {
  return [allowed](const std::string& s) {
    if (std::find(allowed.begin(), allowed.end(), s) != allowed.end()) return;
    std::string list;
    for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
    throw ConfigError("'" + s + "' is not one of: " + list);
  };
}
Check int_list() {
  return [](const std::string& s) { parse_int_list(s); };
}

}  // namespace

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError("'" + s + "' is not a boolean");
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');)
    out.push_back(static_cast<int>(parse_int(item)));
  if (out.empty()) throw ConfigError("empty list");
  return out;
}

void RunConfig::define(const std::string& key, std::string value, Check check) {
  check(value);
  entries_[key] = Entry{std::move(value), std::move(check)};
}

RunConfig::RunConfig() {
  define("preset", "desk", one_of(presets()));
  define("seed", "1", integer(0));
  define("out", "runs/desk", any());

  define("data.root", "data/synthetic", any());
  define("data.layout", "casia", one_of({"casia", "ou-mvlp"}));
  define("data.protocol", "synthetic", one_of({"synthetic", "casia-b", "ou-mvlp"}));
  define("data.synthetic_train_subjects", "12", integer(1));

  define("synth.subjects", "20", integer(2));
  define("synth.views", "0,30,60,90", int_list());
  define("synth.sequences", "8", integer(1, 99));
  define("synth.frames", "40", integer(1));
  define("synth.canvas_height", "100", integer(1));
  define("synth.canvas_width", "80", integer(1));
  define("synth.noise", "0.05", number(0.0, 1.0));
  define("synth.twins", "true", boolean());
  define("synth.twin_period", "20", integer(1));

  define("model.channels", "8,16,32", int_list());
  define("model.height", "64", integer(4));
  define("model.width", "44", integer(4));
  define("bie.template", "static_excl_median",
         one_of({"none", "diff", "multi_diff", "static_excl_mean", "static_excl_median"}));
  define("bie.fusion", "adaptive", one_of({"micro", "global", "adaptive"}));
  define("bie.stages", "1,2,3", int_list());
  define("mfa.enabled", "true", boolean());
  define("mfa.window", "7", integer(3));
  define("mfa.within", "max", one_of({"mean", "max"}));
  define("mfa.final", "max", one_of({"mean", "max"}));

  define("train.p", "4", integer(2));
  define("train.k", "4", integer(2));
  define("train.segment_len", "10", integer(1));
  define("train.iterations", "300", integer(0));
  define("train.lr", "1e-3,200:1e-4", [](const std::string& s) {
    if (s != "casia_b" && s != "ou_mvlp" && s != "constant") LrSchedule::parse(s);
  });
  define("train.margin", "0.2", number(0.0, 1e6));
  define("train.normalization", "paper_2M", one_of({"paper_2M", "plain_mean"}));
  define("train.sign", "standard", one_of({"standard", "as_written"}));
  define("train.checkpoint_every", "100", integer(0));
  define("train.early_stop_nonzero", "0", number(0.0, 1.0));
  define("train.early_stop_window", "20", integer(1));
  define("train.recompute", "false", boolean());
  define("train.threads", "1", integer(1, 256));
  define("train.resume", "", any());

  define("eval.checkpoint", "", any());
  define("eval.exclude_identical_view", "true", boolean());
  define("eval.gallery_is_probe", "false", boolean());
  define("eval.threads", "1", integer(1, 256));

  define("gradcheck.op", "", any());
  define("gradcheck.op_tolerance", "1e-6", number(0.0, 1.0));
  define("gradcheck.e2e_tolerance", "1e-4", number(0.0, 1.0));
  define("gradcheck.step", "1e-5", number(0.0, 1e308));
  define("gradcheck.e2e_step", "1e-6", number(0.0, 1e308));

  define("dump.checkpoint", "", any());
  define("dump.sequence", "", any());

  define("ablate.kind", "all", one_of({"bie", "mfa", "window", "all"}));
  define("ablate.windows", "3,5,7,9,11", int_list());
}

std::vector<std::string> RunConfig::presets() { return {"desk", "casia-b", "ou-mvlp"}; }

void RunConfig::apply_preset(const std::string& name) {
  Entry& e = entries_.at("preset");
  try {
    e.check(name);
  } catch (const Error& err) {
    throw ConfigError(std::string("preset: ") + err.what());
  }
  e.value = name;
  if (name == "desk") return;
  set("model.channels", name == "ou-mvlp" ? "64,128,256" : "32,64,128");
  set("train.p", name == "ou-mvlp" ? "6" : "8");
  set("train.k", name == "ou-mvlp" ? "4" : "6");
  set("train.segment_len", "30");
  set("train.iterations", name == "ou-mvlp" ? "300000" : "150000");
  set("train.lr", name == "ou-mvlp" ? "ou_mvlp" : "casia_b");
  set("train.checkpoint_every", "10000");
  set("data.layout", name == "ou-mvlp" ? "ou-mvlp" : "casia");
  set("data.protocol", name);
  set("data.root", name == "ou-mvlp" ? "data/ou-mvlp" : "data/casia-b");
  set("out", name == "ou-mvlp" ? "runs/ou-mvlp" : "runs/casia-b");
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::string line, section;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto where = path.string() + ":" + std::to_string(lineno) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    const auto key = trim(line.substr(0, eq));
    try {
      set(section.empty() ? key : section + "." + key, trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
}

std::string RunConfig::resolve_key(const std::string& key) const {
  if (entries_.count(key)) return key;
  std::vector<std::string> hits;
  for (const auto& [k, e] : entries_)
    if (k.size() > key.size() && k.compare(k.size() - key.size(), key.size(), key) == 0 &&
        k[k.size() - key.size() - 1] == '.')
      hits.push_back(k);
  if (hits.size() == 1) return hits.front();
  if (hits.empty()) throw ConfigError("unknown configuration key '" + key + "'");
  std::string list;
  for (const auto& h : hits) list += (list.empty() ? "" : ", ") + h;
  throw ConfigError("ambiguous configuration key '" + key + "' (" + list + ")");
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto full = resolve_key(key);
  if (full == "preset") return apply_preset(value);
  Entry& e = entries_.at(full);
  try {
    e.check(value);
  } catch (const Error& err) {
    throw ConfigError(full + ": " + err.what());
  }
  e.value = value;
}

const std::string& RunConfig::get(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) throw ConfigError("unknown configuration key '" + key + "'");
  return it->second.value;
}

std::int64_t RunConfig::get_int(const std::string& key) const { return parse_int(get(key)); }
double RunConfig::get_double(const std::string& key) const { return parse_double(get(key)); }
bool RunConfig::get_bool(const std::string& key) const { return parse_bool(get(key)); }
std::vector<int> RunConfig::get_ints(const std::string& key) const {
  return parse_int_list(get(key));
}

std::vector<std::string> RunConfig::keys() const {
  std::vector<std::string> out;
  for (const auto& [k, e] : entries_) out.push_back(k);
  return out;
}

std::string RunConfig::dump() const {
  // The preset goes first: reading it back re-applies it before the values
  // that may override it.
  std::ostringstream out;
  out << "preset = " << entries_.at("preset").value << '\n';
  for (const auto& [k, e] : entries_)
    if (k != "preset") out << k << " = " << e.value << '\n';
  return out.str();
}

void RunConfig::echo(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "config.txt");
  if (!out) throw Error("cannot write " + (dir / "config.txt").string());
  out << dump();
}

ModelConfig RunConfig::model() const {
  ModelConfig m;
  const auto ch = get_ints("model.channels");
  if (ch.size() != 3) throw ConfigError("model.channels needs three entries");
  for (std::size_t i = 0; i < 3; ++i) {
    if (ch[i] <= 0) throw ConfigError("model.channels entries must be positive");
    m.channels[i] = static_cast<std::size_t>(ch[i]);
  }
  m.height = static_cast<std::size_t>(get_int("model.height"));
  m.width = static_cast<std::size_t>(get_int("model.width"));
  m.bie_template = parse_template_choice(get("bie.template"));
  m.bie_fusion = parse_fusion_mode(get("bie.fusion"));
  m.bie_stages = 0;
  for (int s : get_ints("bie.stages")) {
    if (s < 1 || s > 3) throw ConfigError("bie.stages entries must be 1, 2 or 3");
    m.bie_stages |= 1u << (s - 1);
  }
  m.mfa_enabled = get_bool("mfa.enabled");
  m.mfa_window = static_cast<std::size_t>(get_int("mfa.window"));
  m.mfa_within = parse_reduction(get("mfa.within"));
  m.mfa_final = parse_reduction(get("mfa.final"));
  m.validate();
  return m;
}

SynthSpec RunConfig::synth() const {
  SynthSpec s;
  s.subjects = static_cast<int>(get_int("synth.subjects"));
  s.views = get_ints("synth.views");
  s.sequences = static_cast<int>(get_int("synth.sequences"));
  s.frames = static_cast<int>(get_int("synth.frames"));
  s.canvas_height = static_cast<int>(get_int("synth.canvas_height"));
  s.canvas_width = static_cast<int>(get_int("synth.canvas_width"));
  s.noise = get_double("synth.noise");
  s.twins = get_bool("synth.twins");
  s.twin_period = static_cast<int>(get_int("synth.twin_period"));
  s.seed = static_cast<std::uint64_t>(get_int("seed"));
  s.validate();
  return s;
}

TrainConfig RunConfig::train() const {
  TrainConfig t;
  t.batch.p = static_cast<std::size_t>(get_int("train.p"));
  t.batch.k = static_cast<std::size_t>(get_int("train.k"));
  t.batch.segment_len = static_cast<std::size_t>(get_int("train.segment_len"));
  t.triplet.margin = get_double("train.margin");
  t.triplet.normalization =
      get("train.normalization") == "plain_mean" ? TripletNorm::plain_mean : TripletNorm::paper_2M;
  t.triplet.sign = get("train.sign") == "as_written" ? TripletSign::as_written : TripletSign::standard;
  const auto& lr = get("train.lr");
  t.lr = (lr == "casia_b" || lr == "ou_mvlp" || lr == "constant") ? LrSchedule::preset(lr)
                                                                   : LrSchedule::parse(lr);
  t.iterations = static_cast<std::uint64_t>(get_int("train.iterations"));
  t.seed = static_cast<std::uint64_t>(get_int("seed"));
  t.checkpoint_every = static_cast<std::uint64_t>(get_int("train.checkpoint_every"));
  t.early_stop_nonzero = get_double("train.early_stop_nonzero");
  t.early_stop_window = static_cast<std::uint64_t>(get_int("train.early_stop_window"));
  t.recompute = get_bool("train.recompute");
  t.threads = static_cast<std::size_t>(get_int("train.threads"));
  t.out_dir = get("out");
  t.validate();
  return t;
}

Protocol RunConfig::protocol() const {
  return Protocol::by_name(get("data.protocol"),
                           static_cast<int>(get_int("data.synthetic_train_subjects")));
}

GradCheckSuiteConfig RunConfig::gradcheck() const {
  GradCheckSuiteConfig g;
  g.op_tolerance = get_double("gradcheck.op_tolerance");
  g.e2e_tolerance = get_double("gradcheck.e2e_tolerance");
  g.step = get_double("gradcheck.step");
  g.e2e_step = get_double("gradcheck.e2e_step");
  return g;
}

}  // namespace scn
