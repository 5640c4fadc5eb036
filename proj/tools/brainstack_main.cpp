// SPDX-License-Identifier: Apache-2.0
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "brainstack/config.hpp"
#include "brainstack/data.hpp"
#include "brainstack/gradcheck.hpp"
#include "brainstack/model.hpp"
#include "brainstack/train.hpp"

namespace {

using namespace brainstack;

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

void write_text(const std::string& path, const std::string& body) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open '" + path + "' for writing");
  f.write(body.data(), static_cast<std::streamsize>(body.size()));
  if (!f) throw FormatError("failed writing '" + path + "'");
}

std::vector<std::string> split_list(const std::string& csv) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : csv) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (c != ' ') {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

ExperimentConfig load_or_default(const std::string& config_path) {
  if (config_path.empty()) return default_experiment();
  return load_experiment_config(config_path);
}

int cmd_synth(const std::string& config_path, const std::string& out) {
  ExperimentConfig e = load_or_default(config_path);
  TrialSet ts = generate_synthetic(e.synth, e.montage);
  save_trials(ts, out);
  std::printf("wrote %lld trials (C=%d, T=%d, K=%d) to %s\n",
              static_cast<long long>(ts.size()), ts.C, ts.T, ts.K, out.c_str());
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data, const std::string& out,
              const std::string& log) {
  ExperimentConfig e = load_or_default(config_path);
  TrialSet ts = load_trials(data);
  SplitSets splits = session_split(ts, e.split_train, e.split_val, e.split_test);
  Model model(e.model_config(e.train.variant, e.train.seed));
  TrainResult r = train_model(model, splits.train, splits.val, e.train);
  if (!log.empty()) write_history_csv(log, r.history);
  model.save(out);
  std::printf("variant %s: %d epochs, best val accuracy %s at epoch %d\n",
              variant_name(e.train.variant), r.epochs_run, fmt_g(r.best_val_acc).c_str(),
              r.best_epoch);
  std::printf("checkpoint written to %s\n", out.c_str());
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data, const std::string& report) {
  Model model = Model::load(ckpt);
  TrialSet ts = load_trials(data);
  Metrics m = evaluate_model(model, ts);

  std::string csv = "key,value\n";
  csv += "trials," + std::to_string(ts.size()) + "\n";
  csv += "accuracy," + fmt_g(m.accuracy) + "\n";
  csv += "macro_f1," + fmt_g(m.macro_f1) + "\n";
  for (size_t k = 0; k < m.per_class_f1.size(); ++k) {
    csv += "f1_class_" + std::to_string(k) + "," + fmt_g(m.per_class_f1[k]) + "\n";
  }
  for (size_t t = 0; t < m.confusion.size(); ++t) {
    for (size_t p = 0; p < m.confusion[t].size(); ++p) {
      csv += "confusion_" + std::to_string(t) + "_" + std::to_string(p) + "," +
             std::to_string(m.confusion[t][p]) + "\n";
    }
  }
  if (!report.empty()) write_text(report, csv);
  std::printf("accuracy %s, macro-F1 %s over %lld trials\n", fmt_g(m.accuracy).c_str(),
              fmt_g(m.macro_f1).c_str(), static_cast<long long>(ts.size()));
  return 0;
}

int cmd_gradcheck(const std::string& module) {
  std::vector<GradCheckResult> results = run_gradchecks(module);
  bool all_pass = true;
  for (const GradCheckResult& r : results) {
    std::printf("%-44s max rel err %.3e  %s\n", r.name.c_str(), r.max_rel_err,
                r.pass ? "PASS" : "FAIL");
    all_pass = all_pass && r.pass;
  }
  std::printf("%zu checks, %s\n", results.size(), all_pass ? "all passed" : "FAILURES above");
  return all_pass ? 0 : 3;
}

int cmd_ablate(const std::string& config_path, const std::string& variants_csv,
               const std::string& seeds_csv, const std::string& out) {
  ExperimentConfig e = load_or_default(config_path);

  std::vector<Variant> variants;
  for (const std::string& name : split_list(variants_csv)) {
    Variant v;
    if (!variant_from_name(name, &v)) {
      throw ConfigError("unknown variant '" + name + "' in --variants");
    }
    variants.push_back(v);
  }
  std::vector<uint64_t> seeds;
  for (const std::string& s : split_list(seeds_csv)) {
    try {
      size_t pos = 0;
      seeds.push_back(std::stoull(s, &pos));
      if (pos != s.size()) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw ConfigError("bad seed '" + s + "' in --seeds");
    }
  }

  TrialSet ts = generate_synthetic(e.synth, e.montage);
  SplitSets splits = session_split(ts, e.split_train, e.split_val, e.split_test);
  std::vector<AblationRow> rows =
      run_ablation(e.model_config(e.train.variant, e.train.seed), e.train, splits, variants,
                   seeds);
  std::string csv = ablation_csv(rows);
  write_text(out, csv);
  std::fputs(csv.c_str(), stdout);
  return 0;
}

int cmd_route_report(const std::string& ckpt_dir, const std::string& data_dir,
                     const std::string& out) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(data_dir)) {
    throw ConfigError("--data-dir '" + data_dir + "' is not a directory");
  }
  if (!fs::is_directory(ckpt_dir)) {
    throw ConfigError("--ckpt-dir '" + ckpt_dir + "' is not a directory");
  }
  std::vector<std::pair<std::string, fs::path>> files;  // subject stem -> trials
  for (const auto& entry : fs::directory_iterator(data_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".sseg") {
      files.emplace_back(entry.path().stem().string(), entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) {
    throw ConfigError("no .sseg trial files found in '" + data_dir + "'");
  }

  std::vector<std::unique_ptr<Model>> models;
  std::vector<TrialSet> sets;
  std::vector<SubjectEval> subjects;
  models.reserve(files.size());
  sets.reserve(files.size());
  for (const auto& [stem, trial_path] : files) {
    fs::path ckpt = fs::path(ckpt_dir) / (stem + ".bstk");
    if (!fs::is_regular_file(ckpt)) {
      throw ConfigError("subject '" + stem + "' has trials but no checkpoint at '" +
                        ckpt.string() + "'");
    }
    models.push_back(std::make_unique<Model>(Model::load(ckpt.string())));
    sets.push_back(load_trials(trial_path.string()));
  }
  for (size_t i = 0; i < files.size(); ++i) {
    subjects.push_back({files[i].first, models[i].get(), &sets[i]});
  }

  RouteReport rep = route_report(subjects);
  write_text(out, route_rows_csv(rep.rows));
  std::string summary_path = out;
  const std::string ext = ".csv";
  if (summary_path.size() > ext.size() &&
      summary_path.compare(summary_path.size() - ext.size(), ext.size(), ext) == 0) {
    summary_path.insert(summary_path.size() - ext.size(), ".summary");
  } else {
    summary_path += ".summary.csv";
  }
  write_text(summary_path, route_summary_csv(rep));

  for (const SubjectRouteStats& s : rep.subjects) {
    std::printf("subject %s: accuracy %s over %lld trials\n", s.subject.c_str(),
                fmt_g(s.accuracy).c_str(), static_cast<long long>(s.trials));
  }
  std::printf("per-trial weights: %s\nsummary: %s\n", out.c_str(), summary_path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"BrainStack: a mixture-of-experts EEG decoder"};
  app.require_subcommand(1);

  std::string config_path;
  std::string data_path;
  std::string out_path;
  std::string log_path;
  std::string ckpt_path;
  std::string report_path;
  std::string module = "all";
  std::string variants_csv;
  std::string seeds_csv = "0,1,2";
  std::string ckpt_dir;
  std::string data_dir;

  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic trial file");
  synth->add_option("--config", config_path, "Experiment config file (defaults when omitted)");
  synth->add_option("--out", out_path, "Output trial file (.sseg)")->required();

  CLI::App* train = app.add_subcommand("train", "Train a model on a trial file");
  train->add_option("--config", config_path, "Experiment config file (defaults when omitted)");
  train->add_option("--data", data_path, "Input trial file (.sseg)")->required();
  train->add_option("--out", ckpt_path, "Output checkpoint (.bstk)")->required();
  train->add_option("--log", log_path, "Per-epoch history CSV");

  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a trial file");
  eval->add_option("--ckpt", ckpt_path, "Checkpoint file (.bstk)")->required();
  eval->add_option("--data", data_path, "Trial file (.sseg)")->required();
  eval->add_option("--report", report_path, "Metrics CSV");

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  gradcheck->add_option("--module", module, "all, primitives, cnet, ctnet, router or objective")
      ->check(CLI::IsMember({"all", "primitives", "cnet", "ctnet", "router", "objective"}));

  CLI::App* ablate = app.add_subcommand("ablate", "Train and score several variants");
  ablate->add_option("--config", config_path, "Experiment config file (defaults when omitted)");
  ablate->add_option("--variants", variants_csv, "Comma list of variants")->required();
  ablate->add_option("--seeds", seeds_csv, "Comma list of seeds (default 0,1,2)");
  ablate->add_option("--out", out_path, "Output comparison CSV")->required();

  CLI::App* route = app.add_subcommand("route-report", "Routing-weight analysis across subjects");
  route->add_option("--ckpt-dir", ckpt_dir, "Directory of <subject>.bstk checkpoints")
      ->required();
  route->add_option("--data-dir", data_dir, "Directory of <subject>.sseg trial files")
      ->required();
  route->add_option("--out", out_path, "Output per-trial weights CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (synth->parsed()) return cmd_synth(config_path, out_path);
    if (train->parsed()) return cmd_train(config_path, data_path, ckpt_path, log_path);
    if (eval->parsed()) return cmd_eval(ckpt_path, data_path, report_path);
    if (gradcheck->parsed()) return cmd_gradcheck(module);
    if (ablate->parsed()) return cmd_ablate(config_path, variants_csv, seeds_csv, out_path);
    if (route->parsed()) return cmd_route_report(ckpt_dir, data_dir, out_path);
  } catch (const OracleError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return 3;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return 3;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
