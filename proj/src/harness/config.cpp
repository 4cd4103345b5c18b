#include <cstdio>
#include <fstream>
#include <initializer_list>

#include "evl/error.hpp"
#include "evl/harness.hpp"

namespace evl::harness {
namespace {

using nlohmann::json;

std::string guess_mode_name(GuessMode m) { return m == GuessMode::shared ? "shared" : "independent"; }

GuessMode parse_guess_mode(const std::string& s) {
  if (s == "shared") return GuessMode::shared;
  if (s == "independent") return GuessMode::independent;
  throw InvalidInput("guess_mode must be 'shared' or 'independent', got '" + s + "'");
}

std::string fisher_form_name(FisherForm f) { return f == FisherForm::angle ? "angle" : "paper_literal"; }

FisherForm parse_fisher_form(const std::string& s) {
  if (s == "angle") return FisherForm::angle;
  if (s == "paper_literal") return FisherForm::paper_literal;
  throw InvalidInput("fisher_form must be 'angle' or 'paper_literal', got '" + s + "'");
}

// Reads the keys of one JSON object section, rejecting anything unexpected.
class Section {
 public:
  Section(const json& j, std::string name, std::initializer_list<const char*> keys) : j_(j), name_(std::move(name)) {
    if (!j.is_object()) throw InvalidInput("config: '" + name_ + "' must be an object");
    for (const auto& [key, value] : j.items()) {
      bool known = false;
      for (const char* k : keys) known = known || key == k;
      if (!known) throw InvalidInput("config: unknown key '" + name_ + "." + key + "'");
    }
  }

  void count(const char* key, std::size_t& out) const {
    if (const json* v = find(key)) {
      if (!v->is_number_unsigned()) fail(key, "a non-negative integer");
      out = v->get<std::size_t>();
    }
  }
  void u64(const char* key, std::uint64_t& out) const {
    if (const json* v = find(key)) {
      if (!v->is_number_unsigned()) fail(key, "a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }
  void real(const char* key, double& out) const {
    if (const json* v = find(key)) {
      if (!v->is_number()) fail(key, "a number");
      out = v->get<double>();
    }
  }
  void boolean(const char* key, bool& out) const {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) fail(key, "true or false");
      out = v->get<bool>();
    }
  }
  std::optional<std::string> text(const char* key) const {
    if (const json* v = find(key)) {
      if (!v->is_string()) fail(key, "a string");
      return v->get<std::string>();
    }
    return std::nullopt;
  }
  const json* find(const char* key) const {
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

 private:
  [[noreturn]] void fail(const char* key, const char* expected) const {
    throw InvalidInput("config: '" + name_ + "." + key + "' must be " + expected);
  }
  const json& j_;
  std::string name_;
};

}  // namespace

std::string to_string(ModelKind m) {
  switch (m) {
    case ModelKind::empirical: return "empirical";
    case ModelKind::gmm: return "gmm";
    case ModelKind::evl: return "evl";
  }
  return "?";
}

ModelKind parse_model(const std::string& s) {
  if (s == "empirical") return ModelKind::empirical;
  if (s == "gmm") return ModelKind::gmm;
  if (s == "evl") return ModelKind::evl;
  throw InvalidInput("model must be one of empirical, gmm, evl; got '" + s + "'");
}

json to_json(const RunConfig& c) {
  const TrainConfig& t = c.train;
  return json{
      {"model", to_string(c.model)},
      {"seed", c.seed},
      {"data",
       {{"kind", c.data.kind},
        {"dim", c.data.dim},
        {"modes", c.data.modes},
        {"train_size", c.data.train_size},
        {"test_size", c.data.test_size},
        {"noise", c.data.noise},
        {"scale", c.data.scale}}},
      {"train",
       {{"lr0", t.lr0},
        {"lr_decay_per_epoch", t.lr_decay_per_epoch},
        {"epochs", t.epochs},
        {"batch_size", t.batch_size},
        {"guesses", t.guesses},
        {"noise_dim", t.noise_dim},
        {"hidden_width", t.hidden_width},
        {"hidden_layers", t.hidden_layers},
        {"loss_exponent", t.loss_exponent},
        {"mse_weight", t.mse_weight},
        {"ce_weight", t.ce_weight},
        {"guess_mode", guess_mode_name(t.guess_mode)},
        {"ce_into_trunk", t.ce_into_trunk},
        {"rms_decay", t.rms_decay},
        {"rms_epsilon", t.rms_epsilon}}},
      {"gmm", {{"k", c.gmm.k}, {"max_iter", c.gmm.max_iter}, {"tol", c.gmm.tol}, {"reg", c.gmm.reg}}},
      {"eval",
       {{"samples", c.eval.samples},
        {"sample_guesses", c.eval.sample_guesses},
        {"draws_per_batch", c.eval.draws_per_batch},
        {"range_bins", c.eval.range_bins},
        {"fisher_form", fisher_form_name(c.eval.fisher_form)}}},
  };
}

RunConfig from_json(const json& j, RunConfig c) {
  const Section top(j, "config", {"model", "seed", "data", "train", "gmm", "eval"});
  if (auto m = top.text("model")) c.model = parse_model(*m);
  top.u64("seed", c.seed);

  if (const json* d = top.find("data")) {
    const Section s(*d, "data", {"kind", "dim", "modes", "train_size", "test_size", "noise", "scale"});
    if (auto k = s.text("kind")) c.data.kind = *k;
    s.count("dim", c.data.dim);
    s.count("modes", c.data.modes);
    s.count("train_size", c.data.train_size);
    s.count("test_size", c.data.test_size);
    s.real("noise", c.data.noise);
    s.real("scale", c.data.scale);
  }
  if (const json* t = top.find("train")) {
    const Section s(*t, "train",
                    {"lr0", "lr_decay_per_epoch", "epochs", "batch_size", "guesses", "noise_dim", "hidden_width",
                     "hidden_layers", "loss_exponent", "mse_weight", "ce_weight", "guess_mode", "ce_into_trunk",
                     "rms_decay", "rms_epsilon"});
    TrainConfig& tc = c.train;
    s.real("lr0", tc.lr0);
    s.real("lr_decay_per_epoch", tc.lr_decay_per_epoch);
    s.count("epochs", tc.epochs);
    s.count("batch_size", tc.batch_size);
    s.count("guesses", tc.guesses);
    s.count("noise_dim", tc.noise_dim);
    s.count("hidden_width", tc.hidden_width);
    s.count("hidden_layers", tc.hidden_layers);
    s.real("loss_exponent", tc.loss_exponent);
    s.real("mse_weight", tc.mse_weight);
    s.real("ce_weight", tc.ce_weight);
    if (auto g = s.text("guess_mode")) tc.guess_mode = parse_guess_mode(*g);
    s.boolean("ce_into_trunk", tc.ce_into_trunk);
    s.real("rms_decay", tc.rms_decay);
    s.real("rms_epsilon", tc.rms_epsilon);
  }
  if (const json* g = top.find("gmm")) {
    const Section s(*g, "gmm", {"k", "max_iter", "tol", "reg"});
    s.count("k", c.gmm.k);
    s.count("max_iter", c.gmm.max_iter);
    s.real("tol", c.gmm.tol);
    s.real("reg", c.gmm.reg);
  }
  if (const json* e = top.find("eval")) {
    const Section s(*e, "eval", {"samples", "sample_guesses", "draws_per_batch", "range_bins", "fisher_form"});
    s.count("samples", c.eval.samples);
    s.count("sample_guesses", c.eval.sample_guesses);
    s.count("draws_per_batch", c.eval.draws_per_batch);
    s.count("range_bins", c.eval.range_bins);
    if (auto f = s.text("fisher_form")) c.eval.fisher_form = parse_fisher_form(*f);
  }
  if (c.data.kind != "gaussians" && c.data.kind != "swissroll") {
    throw InvalidInput("config: data.kind must be 'gaussians' or 'swissroll', got '" + c.data.kind + "'");
  }
  return c;
}

RunConfig load_run_config(const std::string& path, RunConfig base) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config " + path);
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw ParseError(path, 0, e.what());
  }
  return from_json(j, std::move(base));
}

std::string config_hash(const RunConfig& cfg) {
  const std::string canonical = to_json(cfg).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : canonical) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<std::string> provenance_header(const RunConfig& cfg) {
  return {"config " + to_json(cfg).dump(), "config_hash " + config_hash(cfg)};
}

std::optional<RunConfig> embedded_config(const std::string& path) {
  std::ifstream is(path);
  std::string line;
  while (std::getline(is, line)) {
    if (line.rfind("# config ", 0) == 0) return from_json(json::parse(line.substr(9)));
  }
  return std::nullopt;
}

}  // namespace evl::harness
