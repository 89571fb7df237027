#include "mrco/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace mrco {

using json = nlohmann::ordered_json;

std::string method_name(Method m) {
  switch (m) {
    case Method::kPlain: return "plain";
    case Method::kAug: return "aug";
    case Method::kAugFilter: return "aug_filter";
    case Method::kMrco: return "mrco";
    case Method::kMrcoNoContrastive: return "mrco_no_contrastive";
    case Method::kMrcoFifo: return "mrco_fifo";
  }
  throw std::logic_error("method_name: unhandled method");
}

Method method_from_name(const std::string& name) {
  for (Method m : {Method::kPlain, Method::kAug, Method::kAugFilter,
                   Method::kMrco, Method::kMrcoNoContrastive, Method::kMrcoFifo})
    if (method_name(m) == name) return m;
  throw std::invalid_argument("unknown method '" + name +
                              "' (expected plain, aug, aug_filter, mrco, "
                              "mrco_no_contrastive, or mrco_fifo)");
}

bool method_uses_reweighter(Method m) {
  return m == Method::kMrco || m == Method::kMrcoNoContrastive ||
         m == Method::kMrcoFifo;
}

namespace {

json default_json() {
  ExperimentConfig d;
  json j;
  j["method"] = method_name(d.method);
  j["metric"] = d.metric;
  j["seeds"] = d.seeds;
  j["epochs"] = d.epochs;
  j["batch_size"] = d.batch_size;
  j["aug_batch_size"] = d.aug_batch_size;
  j["meta_batch_size"] = d.meta_batch_size;
  j["main_lr"] = d.main_lr;
  j["meta_lr"] = d.meta_lr;
  j["reweight_lr"] = d.reweight_lr;
  j["meta_fraction"] = d.meta_fraction;
  j["lambda"] = d.lambda;
  j["encoder"] = {{"variant", d.encoder.variant == EncoderVariant::kEmbedMeanMlp
                                  ? "embed_mean_mlp"
                                  : "text_cnn"},
                  {"d_emb", d.encoder.d_emb},
                  {"d_mlp", d.encoder.d_mlp},
                  {"n_filters", d.encoder.n_filters},
                  {"widths", d.encoder.widths},
                  {"max_len", d.max_len}};
  j["reweighter"] = {{"d_label", d.reweighter.d_label},
                     {"d_hidden", d.reweighter.d_hidden},
                     {"dropout", d.reweighter.dropout_p}};
  j["contrastive"] = {{"n_neg", d.contrastive.n_neg},
                      {"tau", d.contrastive.tau},
                      {"rho", d.contrastive.rho},
                      {"gamma", d.contrastive.gamma},
                      {"temperature", d.contrastive.temperature},
                      {"normalize", d.contrastive.normalize}};
  j["data"] = {{"train", d.data.train},
               {"dev", d.data.dev},
               {"augmented", d.data.augmented},
               {"min_frequency", d.data.min_frequency}};
  j["synthetic"] = {{"n_train", d.synthetic.n_train},
                    {"n_dev", d.synthetic.n_dev},
                    {"n_classes", d.synthetic.n_classes},
                    {"text_len", d.synthetic.text_len},
                    {"n_fillers", d.synthetic.n_fillers},
                    {"signal_per_class", d.synthetic.signal_per_class},
                    {"signals_in_text", d.synthetic.signals_in_text},
                    {"per_example", d.synthetic.per_example},
                    {"corrupt_rate", d.synthetic.corrupt_rate},
                    {"data_seed", d.synthetic.data_seed}};
  j["augmenter"] = {{"lexicon", d.augmenter.lexicon},
                    {"names", d.augmenter.names},
                    {"per_example", d.augmenter.per_example},
                    {"synonym_prob", d.augmenter.synonym_prob},
                    {"easydata",
                     {{"replace", d.augmenter.easydata.replace},
                      {"insert", d.augmenter.easydata.insert},
                      {"swap", d.augmenter.easydata.swap},
                      {"erase", d.augmenter.easydata.erase}}},
                    {"charswap_prob", d.augmenter.charswap_prob},
                    {"seed", d.augmenter.seed}};
  j["filter"] = {{"lower", d.filter.lower}, {"upper", d.filter.upper}};
  j["sweep"] = {{"n_neg", json::array()},
                {"tau", json::array()},
                {"lambda", json::array()},
                {"rho", json::array()}};
  return j;
}

// Recursive overlay; every key in `patch` must already exist in `base`.
void merge_strict(json& base, const json& patch, const std::string& prefix) {
  if (!patch.is_object())
    throw std::invalid_argument("config: expected an object at " +
                                (prefix.empty() ? "top level" : prefix));
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!base.contains(it.key()))
      throw std::invalid_argument("config: unknown key '" + path + "'");
    if (base[it.key()].is_object() && !it.value().is_object())
      throw std::invalid_argument("config: '" + path + "' must be an object");
    if (base[it.key()].is_object())
      merge_strict(base[it.key()], it.value(), path);
    else
      base[it.key()] = it.value();
  }
}

std::vector<std::string> split_path(const std::string& s) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    std::size_t dot = s.find('.', start);
    if (dot == std::string::npos) {
      parts.push_back(s.substr(start));
      break;
    }
    parts.push_back(s.substr(start, dot - start));
    start = dot + 1;
  }
  return parts;
}

json parse_override_value(const std::string& text, const json& current) {
  // valid JSON wins (numbers, booleans, quoted strings, [arrays])
  json parsed = json::parse(text, nullptr, false);
  if (!parsed.is_discarded()) {
    if (current.is_array() && !parsed.is_array())
      return json::array({parsed});  // seeds=4 means a one-element list
    if (current.is_string() && !parsed.is_string())
      return json(text);  // keep path-like values verbatim
    return parsed;
  }
  if (current.is_array()) {
    json arr = json::array();
    std::stringstream ss(text);
    std::string piece;
    while (std::getline(ss, piece, ',')) {
      json p = json::parse(piece, nullptr, false);
      arr.push_back(p.is_discarded() ? json(piece) : p);  // bare words stay strings
    }
    return arr;
  }
  return json(text);  // bare word: a string value
}

void apply_override(json& j, const std::string& spec) {
  std::size_t eq = spec.find('=');
  if (eq == std::string::npos || eq == 0)
    throw std::invalid_argument("config override '" + spec +
                                "' is not of the form key=value");
  std::vector<std::string> parts = split_path(spec.substr(0, eq));
  std::string value_text = spec.substr(eq + 1);

  json* cursor = &j;
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!cursor->contains(parts[i]) || !(*cursor)[parts[i]].is_object())
      throw std::invalid_argument("config override: unknown key '" +
                                  spec.substr(0, eq) + "'");
    cursor = &(*cursor)[parts[i]];
  }
  const std::string& leaf = parts.back();
  if (!cursor->contains(leaf) || (*cursor)[leaf].is_object())
    throw std::invalid_argument("config override: unknown key '" +
                                spec.substr(0, eq) + "'");
  (*cursor)[leaf] = parse_override_value(value_text, (*cursor)[leaf]);
}

template <typename T>
T get_as(const json& j, const std::string& path) {
  const json* cursor = &j;
  for (const std::string& part : split_path(path)) cursor = &(*cursor)[part];
  try {
    return cursor->get<T>();
  } catch (const json::exception&) {
    throw std::invalid_argument("config: value at '" + path +
                                "' has the wrong type");
  }
}

ExperimentConfig config_from_merged(const json& j) {
  ExperimentConfig c;
  c.method = method_from_name(get_as<std::string>(j, "method"));
  c.metric = get_as<std::string>(j, "metric");
  c.seeds = get_as<std::vector<std::uint64_t>>(j, "seeds");
  c.epochs = get_as<std::size_t>(j, "epochs");
  c.batch_size = get_as<std::size_t>(j, "batch_size");
  c.aug_batch_size = get_as<std::size_t>(j, "aug_batch_size");
  c.meta_batch_size = get_as<std::size_t>(j, "meta_batch_size");
  c.main_lr = get_as<double>(j, "main_lr");
  c.meta_lr = get_as<double>(j, "meta_lr");
  c.reweight_lr = get_as<double>(j, "reweight_lr");
  c.meta_fraction = get_as<double>(j, "meta_fraction");
  c.lambda = get_as<double>(j, "lambda");

  std::string variant = get_as<std::string>(j, "encoder.variant");
  if (variant == "embed_mean_mlp")
    c.encoder.variant = EncoderVariant::kEmbedMeanMlp;
  else if (variant == "text_cnn")
    c.encoder.variant = EncoderVariant::kTextCnn;
  else
    throw std::invalid_argument("config: encoder.variant must be "
                                "embed_mean_mlp or text_cnn, got '" +
                                variant + "'");
  c.encoder.d_emb = get_as<std::size_t>(j, "encoder.d_emb");
  c.encoder.d_mlp = get_as<std::size_t>(j, "encoder.d_mlp");
  c.encoder.n_filters = get_as<std::size_t>(j, "encoder.n_filters");
  c.encoder.widths = get_as<std::vector<std::size_t>>(j, "encoder.widths");
  c.max_len = get_as<std::size_t>(j, "encoder.max_len");

  c.reweighter.d_label = get_as<std::size_t>(j, "reweighter.d_label");
  c.reweighter.d_hidden = get_as<std::size_t>(j, "reweighter.d_hidden");
  c.reweighter.dropout_p = get_as<double>(j, "reweighter.dropout");

  c.contrastive.n_neg = get_as<std::size_t>(j, "contrastive.n_neg");
  c.contrastive.tau = get_as<int>(j, "contrastive.tau");
  c.contrastive.rho = get_as<double>(j, "contrastive.rho");
  c.contrastive.gamma = get_as<double>(j, "contrastive.gamma");
  c.contrastive.temperature = get_as<double>(j, "contrastive.temperature");
  c.contrastive.normalize = get_as<bool>(j, "contrastive.normalize");

  c.data.train = get_as<std::string>(j, "data.train");
  c.data.dev = get_as<std::string>(j, "data.dev");
  c.data.augmented = get_as<std::string>(j, "data.augmented");
  c.data.min_frequency = get_as<std::size_t>(j, "data.min_frequency");

  c.synthetic.n_train = get_as<std::size_t>(j, "synthetic.n_train");
  c.synthetic.n_dev = get_as<std::size_t>(j, "synthetic.n_dev");
  c.synthetic.n_classes = get_as<std::size_t>(j, "synthetic.n_classes");
  c.synthetic.text_len = get_as<std::size_t>(j, "synthetic.text_len");
  c.synthetic.n_fillers = get_as<std::size_t>(j, "synthetic.n_fillers");
  c.synthetic.signal_per_class =
      get_as<std::size_t>(j, "synthetic.signal_per_class");
  c.synthetic.signals_in_text =
      get_as<std::size_t>(j, "synthetic.signals_in_text");
  c.synthetic.per_example = get_as<std::size_t>(j, "synthetic.per_example");
  c.synthetic.corrupt_rate = get_as<double>(j, "synthetic.corrupt_rate");
  c.synthetic.data_seed = get_as<std::uint64_t>(j, "synthetic.data_seed");

  c.augmenter.lexicon = get_as<std::string>(j, "augmenter.lexicon");
  c.augmenter.names = get_as<std::vector<std::string>>(j, "augmenter.names");
  c.augmenter.per_example = get_as<std::size_t>(j, "augmenter.per_example");
  c.augmenter.synonym_prob = get_as<double>(j, "augmenter.synonym_prob");
  c.augmenter.easydata.replace = get_as<double>(j, "augmenter.easydata.replace");
  c.augmenter.easydata.insert = get_as<double>(j, "augmenter.easydata.insert");
  c.augmenter.easydata.swap = get_as<double>(j, "augmenter.easydata.swap");
  c.augmenter.easydata.erase = get_as<double>(j, "augmenter.easydata.erase");
  c.augmenter.charswap_prob = get_as<double>(j, "augmenter.charswap_prob");
  c.augmenter.seed = get_as<std::uint64_t>(j, "augmenter.seed");

  c.filter.lower = get_as<double>(j, "filter.lower");
  c.filter.upper = get_as<double>(j, "filter.upper");

  c.sweep_n_neg = get_as<std::vector<std::size_t>>(j, "sweep.n_neg");
  c.sweep_tau = get_as<std::vector<int>>(j, "sweep.tau");
  c.sweep_lambda = get_as<std::vector<double>>(j, "sweep.lambda");
  c.sweep_rho = get_as<std::vector<double>>(j, "sweep.rho");

  validate_config(c);
  return c;
}

void require(bool ok, const std::string& message) {
  if (!ok) throw std::invalid_argument("config: " + message);
}

}  // namespace

void validate_config(const ExperimentConfig& c) {
  require(c.metric == "accuracy" || c.metric == "mcc",
          "metric must be accuracy or mcc, got '" + c.metric + "'");
  require(!c.seeds.empty(), "seeds list is empty");
  require(c.batch_size >= 1, "batch_size must be >= 1");
  require(c.aug_batch_size >= 1, "aug_batch_size must be >= 1");
  require(c.meta_batch_size >= 1, "meta_batch_size must be >= 1");
  require(c.main_lr > 0, "main_lr must be > 0");
  require(c.meta_lr > 0, "meta_lr must be > 0");
  require(c.reweight_lr > 0, "reweight_lr must be > 0");
  require(c.meta_fraction > 0 && c.meta_fraction < 1,
          "meta_fraction must lie strictly between 0 and 1");
  require(c.lambda >= 0, "lambda must be >= 0");

  require(c.encoder.d_emb >= 1 && c.encoder.d_mlp >= 1 &&
              c.encoder.n_filters >= 1,
          "encoder dimensions must be >= 1");
  require(!c.encoder.widths.empty(), "encoder.widths is empty");
  for (std::size_t w : c.encoder.widths)
    require(w >= 1, "encoder.widths entries must be >= 1");
  require(c.max_len >= 1, "encoder.max_len must be >= 1");

  require(c.reweighter.d_label >= 1 && c.reweighter.d_hidden >= 1,
          "reweighter dimensions must be >= 1");
  require(c.reweighter.dropout_p >= 0 && c.reweighter.dropout_p < 1,
          "reweighter.dropout must lie in [0,1)");

  require(c.contrastive.n_neg >= 1, "contrastive.n_neg must be >= 1");
  require(c.contrastive.tau >= 1, "contrastive.tau must be >= 1");
  require(c.contrastive.rho >= 0 && c.contrastive.rho <= 1,
          "contrastive.rho must lie in [0,1]");
  require(c.contrastive.gamma >= 0 && c.contrastive.gamma <= 1,
          "contrastive.gamma must lie in [0,1]");
  require(c.contrastive.temperature > 0,
          "contrastive.temperature must be > 0");

  require(c.filter.lower <= c.filter.upper,
          "filter.lower must not exceed filter.upper");

  if (c.data.train.empty()) {
    const SyntheticSpec& s = c.synthetic;
    require(s.n_classes >= 2, "synthetic.n_classes must be >= 2");
    require(s.n_train >= 2 * s.n_classes,
            "synthetic.n_train too small for a stratified split");
    require(s.n_dev >= 1, "synthetic.n_dev must be >= 1");
    require(s.text_len >= 1, "synthetic.text_len must be >= 1");
    require(s.n_fillers >= 1, "synthetic.n_fillers must be >= 1");
    require(s.signal_per_class >= 1, "synthetic.signal_per_class must be >= 1");
    require(s.signals_in_text >= 1 && s.signals_in_text <= s.text_len,
            "synthetic.signals_in_text must lie in [1, text_len]");
    require(s.per_example >= 1, "synthetic.per_example must be >= 1");
    require(s.corrupt_rate >= 0 && s.corrupt_rate <= 1,
            "synthetic.corrupt_rate must lie in [0,1]");
  } else {
    require(!c.data.dev.empty(), "data.dev is required when data.train is set");
  }

  if (!c.data.train.empty() && c.data.augmented.empty() &&
      c.method != Method::kPlain) {
    require(!c.augmenter.names.empty(), "augmenter.names is empty");
    require(c.augmenter.per_example >= 1, "augmenter.per_example must be >= 1");
    for (const std::string& n : c.augmenter.names)
      require(n == "synonym" || n == "easydata" || n == "charswap",
              "unknown augmenter '" + n + "'");
    require(c.augmenter.synonym_prob >= 0 && c.augmenter.synonym_prob <= 1,
            "augmenter.synonym_prob must lie in [0,1]");
    require(c.augmenter.charswap_prob >= 0 && c.augmenter.charswap_prob <= 1,
            "augmenter.charswap_prob must lie in [0,1]");
  }
}

ExperimentConfig config_from_json_text(const std::string& json_text,
                                       const std::vector<std::string>& overrides) {
  json merged = default_json();
  if (!json_text.empty()) {
    json file = json::parse(json_text, nullptr, false);
    if (file.is_discarded())
      throw std::invalid_argument("config: file is not valid JSON");
    merge_strict(merged, file, "");
  }
  for (const std::string& spec : overrides) apply_override(merged, spec);
  return config_from_merged(merged);
}

ExperimentConfig load_config(const std::string& path,
                             const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return config_from_json_text(buf.str(), overrides);
}

std::string config_to_json_text(const ExperimentConfig& c) {
  json j = default_json();
  j["method"] = method_name(c.method);
  j["metric"] = c.metric;
  j["seeds"] = c.seeds;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["aug_batch_size"] = c.aug_batch_size;
  j["meta_batch_size"] = c.meta_batch_size;
  j["main_lr"] = c.main_lr;
  j["meta_lr"] = c.meta_lr;
  j["reweight_lr"] = c.reweight_lr;
  j["meta_fraction"] = c.meta_fraction;
  j["lambda"] = c.lambda;
  j["encoder"]["variant"] = c.encoder.variant == EncoderVariant::kEmbedMeanMlp
                                ? "embed_mean_mlp"
                                : "text_cnn";
  j["encoder"]["d_emb"] = c.encoder.d_emb;
  j["encoder"]["d_mlp"] = c.encoder.d_mlp;
  j["encoder"]["n_filters"] = c.encoder.n_filters;
  j["encoder"]["widths"] = c.encoder.widths;
  j["encoder"]["max_len"] = c.max_len;
  j["reweighter"]["d_label"] = c.reweighter.d_label;
  j["reweighter"]["d_hidden"] = c.reweighter.d_hidden;
  j["reweighter"]["dropout"] = c.reweighter.dropout_p;
  j["contrastive"]["n_neg"] = c.contrastive.n_neg;
  j["contrastive"]["tau"] = c.contrastive.tau;
  j["contrastive"]["rho"] = c.contrastive.rho;
  j["contrastive"]["gamma"] = c.contrastive.gamma;
  j["contrastive"]["temperature"] = c.contrastive.temperature;
  j["contrastive"]["normalize"] = c.contrastive.normalize;
  j["data"]["train"] = c.data.train;
  j["data"]["dev"] = c.data.dev;
  j["data"]["augmented"] = c.data.augmented;
  j["data"]["min_frequency"] = c.data.min_frequency;
  j["synthetic"]["n_train"] = c.synthetic.n_train;
  j["synthetic"]["n_dev"] = c.synthetic.n_dev;
  j["synthetic"]["n_classes"] = c.synthetic.n_classes;
  j["synthetic"]["text_len"] = c.synthetic.text_len;
  j["synthetic"]["n_fillers"] = c.synthetic.n_fillers;
  j["synthetic"]["signal_per_class"] = c.synthetic.signal_per_class;
  j["synthetic"]["signals_in_text"] = c.synthetic.signals_in_text;
  j["synthetic"]["per_example"] = c.synthetic.per_example;
  j["synthetic"]["corrupt_rate"] = c.synthetic.corrupt_rate;
  j["synthetic"]["data_seed"] = c.synthetic.data_seed;
  j["augmenter"]["lexicon"] = c.augmenter.lexicon;
  j["augmenter"]["names"] = c.augmenter.names;
  j["augmenter"]["per_example"] = c.augmenter.per_example;
  j["augmenter"]["synonym_prob"] = c.augmenter.synonym_prob;
  j["augmenter"]["easydata"]["replace"] = c.augmenter.easydata.replace;
  j["augmenter"]["easydata"]["insert"] = c.augmenter.easydata.insert;
  j["augmenter"]["easydata"]["swap"] = c.augmenter.easydata.swap;
  j["augmenter"]["easydata"]["erase"] = c.augmenter.easydata.erase;
  j["augmenter"]["charswap_prob"] = c.augmenter.charswap_prob;
  j["augmenter"]["seed"] = c.augmenter.seed;
  j["filter"]["lower"] = c.filter.lower;
  j["filter"]["upper"] = c.filter.upper;
  j["sweep"]["n_neg"] = c.sweep_n_neg;
  j["sweep"]["tau"] = c.sweep_tau;
  j["sweep"]["lambda"] = c.sweep_lambda;
  j["sweep"]["rho"] = c.sweep_rho;
  return j.dump(2) + "\n";
}

}  // namespace mrco
