#include "mmfl/cli.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <functional>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

namespace mmfl {

namespace {

namespace pt = boost::property_tree;

std::string strip(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = strip(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
T parse_value(const std::string& field, const std::string& text) {
  const std::string s = strip(text);
  T value{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
    throw ConfigError("config field '" + field + "': cannot parse '" + text + "'");
  return value;
}

// Walks one section, dispatching each key to a handler; unknown keys throw.
class Section {
 public:
  Section(const pt::ptree& tree, std::string name) : tree_(tree), name_(std::move(name)) {}

  template <typename Handlers>
  void apply(const Handlers& handlers) const {
    for (const auto& [key, node] : tree_) {
      auto it = handlers.find(key);
      if (it == handlers.end()) throw ConfigError("unknown config field '" + name_ + "." + key + "'");
      it->second(name_ + "." + key, node.data());
    }
  }

 private:
  const pt::ptree& tree_;
  std::string name_;
};

using Handler = std::function<void(const std::string&, const std::string&)>;
using Handlers = std::map<std::string, Handler>;

template <typename T>
Handler set(T& target) {
  return [&target](const std::string& field, const std::string& text) { target = parse_value<T>(field, text); };
}

Handler set_path(std::filesystem::path& target, const std::filesystem::path& base) {
  return [&target, base](const std::string&, const std::string& text) {
    std::filesystem::path p = strip(text);
    target = p.is_relative() && !base.empty() ? base / p : p;
  };
}

}  // namespace

RunnerConfig parse_config(std::istream& in, const std::filesystem::path& base_dir) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("malformed config: " + std::string(e.what()));
  }

  RunnerConfig rc;
  ExperimentConfig& cfg = rc.experiment;
  std::string source = "synthetic";
  auto& syn = cfg.data.synthetic;
  std::optional<std::size_t> min_count;

  const std::map<std::string, Handlers> sections{
      {"experiment",
       {{"regime", [&](const std::string&, const std::string& v) { cfg.regime.kind = parse_regime(strip(v)); }},
        {"global_epochs", set(cfg.regime.global_epochs)},
        {"seeds",
         [&](const std::string& f, const std::string& v) {
           cfg.seeds.clear();
           for (const auto& s : split_list(v)) cfg.seeds.push_back(parse_value<std::uint64_t>(f, s));
         }},
        {"threads", set(cfg.threads)},
        {"centralized_reference", set_path(rc.centralized_reference, base_dir)}}},
      {"data",
       {{"source", [&](const std::string&, const std::string& v) { source = strip(v); }},
        {"classes", set(syn.classes)},
        {"per_class", set(syn.per_class)},
        {"image_dim", set(syn.image_dim)},
        {"audio_dim", set(syn.audio_dim)},
        {"latent_dim", set(syn.latent_dim)},
        {"noise_sigma", set(syn.noise_sigma)},
        {"within_class_sigma", set(syn.within_class_sigma)},
        {"seed",
         [&](const std::string& f, const std::string& v) {
           syn.seed = parse_value<std::uint64_t>(f, v);
           cfg.split.seed = syn.seed;
         }},
        {"image_csv", set_path(cfg.data.image_csv, base_dir)},
        {"audio_csv", set_path(cfg.data.audio_csv, base_dir)},
        {"label_csv", set_path(cfg.data.label_csv, base_dir)},
        {"combined_csv", set_path(cfg.data.combined_csv, base_dir)},
        {"class_names", [&](const std::string&, const std::string& v) { cfg.data.class_names = split_list(v); }},
        {"train_fraction", set(cfg.split.train)},
        {"val_fraction", set(cfg.split.val)},
        {"test_fraction", set(cfg.split.test)}}},
      {"model", {{"scale", set(cfg.model.scale)}, {"leaky_slope", set(cfg.model.leaky_slope)}}},
      {"training",
       {{"learning_rate", set(cfg.learning_rate)}, {"batch", set(cfg.batch)}, {"temperature", set(cfg.temperature)}}},
      {"federation",
       {{"participants", set(cfg.federation.participants)},
        {"local_epochs", set(cfg.federation.local_epochs)},
        {"local_batch", set(cfg.federation.local_batch)},
        {"min_count",
         [&](const std::string& f, const std::string& v) { min_count = parse_value<std::size_t>(f, v); }}}},
      {"output", {{"directory", set_path(rc.output_dir, base_dir)}}},
  };

  for (const auto& [name, node] : tree) {
    if (node.empty()) throw ConfigError("config field '" + name + "' must live inside a [section]");
    auto it = sections.find(name);
    if (it == sections.end()) throw ConfigError("unknown config section [" + name + "]");
    Section(node, name).apply(it->second);
  }

  if (source == "synthetic") cfg.data.kind = DataSource::Kind::synthetic;
  else if (source == "csv") cfg.data.kind = DataSource::Kind::csv;
  else throw ConfigError("config field 'data.source' must be synthetic or csv");
  cfg.federation.min_count = min_count;
  cfg.validate();
  return rc;
}

RunnerConfig parse_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  return parse_config(in, path.parent_path());
}

// ---------------------------------------------------------------------------
// Serialization

using nlohmann::json;

json to_json(const ExperimentConfig& cfg) {
  json data;
  if (cfg.data.kind == DataSource::Kind::synthetic) {
    const auto& s = cfg.data.synthetic;
    data = {{"source", "synthetic"},       {"classes", s.classes},
            {"per_class", s.per_class},     {"image_dim", s.image_dim},
            {"audio_dim", s.audio_dim},     {"latent_dim", s.latent_dim},
            {"noise_sigma", s.noise_sigma}, {"within_class_sigma", s.within_class_sigma},
            {"seed", s.seed}};
  } else {
    data = {{"source", "csv"},
            {"image_csv", cfg.data.image_csv.string()},
            {"audio_csv", cfg.data.audio_csv.string()},
            {"label_csv", cfg.data.label_csv.string()},
            {"combined_csv", cfg.data.combined_csv.string()}};
    if (cfg.data.class_names) data["class_names"] = *cfg.data.class_names;
  }
  data["split"] = {{"train", cfg.split.train}, {"val", cfg.split.val}, {"test", cfg.split.test},
                   {"seed", cfg.split.seed}};
  json fed = {{"participants", cfg.federation.participants},
              {"local_epochs", cfg.federation.local_epochs},
              {"local_batch", cfg.federation.local_batch}};
  fed["min_count"] = cfg.federation.min_count ? json(*cfg.federation.min_count) : json(nullptr);
  return {{"regime", to_string(cfg.regime.kind)},
          {"global_epochs", cfg.regime.global_epochs},
          {"seeds", cfg.seeds},
          {"data", data},
          {"model", {{"scale", cfg.model.scale}, {"leaky_slope", cfg.model.leaky_slope}}},
          {"training",
           {{"learning_rate", cfg.learning_rate}, {"batch", cfg.batch}, {"temperature", cfg.temperature}}},
          {"federation", fed}};
}

namespace {

json matrix_json(const ConfusionMatrix& cm) {
  json rows = json::array();
  for (Index r = 0; r < cm.classes(); ++r) {
    json row = json::array();
    for (Index c = 0; c < cm.classes(); ++c) row.push_back(cm(r, c));
    rows.push_back(row);
  }
  return rows;
}

json normalized_json(const ConfusionMatrix& cm) {
  const auto n = normalize(cm);
  json rows = json::array();
  for (Index r = 0; r < n.rates.rows(); ++r) {
    json row = json::array();
    for (Index c = 0; c < n.rates.cols(); ++c) row.push_back(n.rates(r, c));
    rows.push_back(row);
  }
  return {{"rates", rows}, {"empty_rows", n.empty_rows}};
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_confusion_csv(const std::filesystem::path& path, const ConfusionMatrix& cm, bool normalized) {
  std::ofstream out(path);
  out << "actual\\predicted";
  for (Index c = 0; c < cm.classes(); ++c) out << ',' << c;
  out << '\n';
  const auto n = normalize(cm);
  for (Index r = 0; r < cm.classes(); ++r) {
    out << r;
    for (Index c = 0; c < cm.classes(); ++c)
      out << ',' << (normalized ? format_double(n.rates(r, c)) : std::to_string(cm(r, c)));
    out << '\n';
  }
}

}  // namespace

json to_json(const ExperimentReport& report) {
  json runs = json::array();
  for (const auto& run : report.runs) {
    json test = json::object();
    for (const auto& [m, r] : run.test)
      test[m] = {{"accuracy", r.accuracy},
                 {"loss", r.loss},
                 {"confusion", matrix_json(r.confusion)},
                 {"normalized_confusion", normalized_json(r.confusion)}};
    runs.push_back({{"seed", run.seed},
                    {"curves", run.curves},
                    {"test", test},
                    {"test_loss", run.test_loss},
                    {"aggregation_calls", run.aggregation_calls}});
  }
  json confusions = json::object();
  for (const auto& [m, cm] : report.confusion)
    confusions[m] = {{"counts", matrix_json(cm)}, {"normalized", normalized_json(cm)}};
  return {{"format", "mmfl-report/1"},
          {"config", to_json(report.config)},
          {"runs", runs},
          {"mean_curves", report.mean_curves},
          {"mean_test_accuracy", report.mean_test_accuracy},
          {"confusion", confusions},
          {"delta_gaps", report.delta_gaps},
          {"wall_clock_seconds", report.wall_clock_seconds}};
}

void write_report(const ExperimentReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "report.json");
    out << to_json(report).dump(2) << '\n';
  }
  {
    std::ofstream out(dir / "curves.csv");
    out << "seed,epoch,series,value\n";
    auto emit = [&](const std::string& seed, const Curves& curves) {
      for (const auto& [series, values] : curves)
        for (std::size_t e = 0; e < values.size(); ++e)
          out << seed << ',' << e + 1 << ',' << series << ',' << format_double(values[e]) << '\n';
    };
    for (const auto& run : report.runs) emit(std::to_string(run.seed), run.curves);
    emit("mean", report.mean_curves);
  }
  for (const auto& [m, cm] : report.confusion) {
    write_confusion_csv(dir / ("confusion_" + m + ".csv"), cm, false);
    write_confusion_csv(dir / ("confusion_" + m + "_normalized.csv"), cm, true);
  }
}

std::map<std::string, double> read_mean_accuracies(const std::filesystem::path& report_json) {
  std::ifstream in(report_json);
  if (!in) throw DataError("cannot open report " + report_json.string());
  json j;
  try {
    in >> j;
    return j.at("mean_test_accuracy").get<std::map<std::string, double>>();
  } catch (const json::exception& e) {
    throw DataError("malformed report " + report_json.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Commands

int run_command(const RunOptions& options, std::ostream& out, std::ostream& err) {
  RunnerConfig rc;
  try {
    rc = parse_config_file(options.config);
    if (options.seed) rc.experiment.seeds = {*options.seed};
    if (options.output_dir) {
      rc.output_dir = *options.output_dir;
    } else if (rc.output_dir.empty()) {
      const char* env = std::getenv(kOutputDirEnv);
      rc.output_dir = env && *env ? env : "mmfl-out";
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    std::optional<std::map<std::string, double>> reference;
    if (!rc.centralized_reference.empty()) reference = read_mean_accuracies(rc.centralized_reference);
    if (options.verbose)
      out << "running " << to_string(rc.experiment.regime.kind) << " for " << rc.experiment.regime.global_epochs
          << " global epochs over " << rc.experiment.seeds.size() << " seed(s)\n";
    ExperimentReport report = run_experiment(rc.experiment);
    if (reference) attach_delta_gaps(report, *reference);
    write_report(report, rc.output_dir);
    if (options.verbose) {
      for (const auto& [m, acc] : report.mean_test_accuracy)
        out << m << " test accuracy " << std::fixed << std::setprecision(4) << acc << '\n';
      out << "wrote " << rc.output_dir.string() << '\n';
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
}

int compare_command(const std::filesystem::path& a, const std::filesystem::path& b, std::ostream& out,
                    std::ostream& err) {
  std::map<std::string, double> acc_a, acc_b;
  try {
    acc_a = read_mean_accuracies(a);
    acc_b = read_mean_accuracies(b);
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  }
  std::set<std::string> modalities;
  for (const auto& [m, _] : acc_a) modalities.insert(m);
  for (const auto& [m, _] : acc_b) modalities.insert(m);

  auto cell = [](const std::map<std::string, double>& acc, const std::string& m) -> std::optional<double> {
    auto it = acc.find(m);
    return it == acc.end() ? std::nullopt : std::optional<double>(it->second);
  };
  char line[128];
  std::snprintf(line, sizeof line, "%-12s %10s %10s %11s %10s\n", "modality", "a", "b", "b-a", "delta_gap");
  out << line;
  for (const auto& m : modalities) {
    const auto va = cell(acc_a, m);
    const auto vb = cell(acc_b, m);
    if (va && vb) {
      std::snprintf(line, sizeof line, "%-12s %10.4f %10.4f %+11.4f %10.4f\n", m.c_str(), *va, *vb, *vb - *va,
                    delta_gap(*vb, *va));
    } else {
      std::snprintf(line, sizeof line, "%-12s %10s %10s %11s %10s\n", m.c_str(),
                    va ? format_double(*va).substr(0, 6).c_str() : "-", vb ? format_double(*vb).substr(0, 6).c_str() : "-",
                    "-", "-");
    }
    out << line;
  }
  return kExitOk;
}

}  // namespace mmfl
