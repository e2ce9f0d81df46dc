// Copyright 2026 The AMLNet Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cli.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "amlnet/checkpoint.hpp"
#include "amlnet/config.hpp"
#include "amlnet/errors.hpp"
#include "amlnet/metrics.hpp"
#include "amlnet/training.hpp"
#include "json.hpp"

namespace amlnet::cli {
namespace {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

constexpr const char* kVersion = AMLNET_VERSION;

struct Options {
  std::string config;
  std::string out;
  std::string checkpoint;
  std::string decoders;
  std::optional<std::uint64_t> seed;
  bool latency = false;
  int latency_runs = 10;
};

RunConfig load_run_config(const Options& opt) {
  RunConfig cfg = load_config(opt.config);
  if (opt.seed) {
    cfg.train.seed = *opt.seed;
    resolve(cfg);
  }
  return cfg;
}

int worker_count() {
  const char* env = std::getenv("AMLNET_NUM_WORKERS");
  if (env == nullptr || *env == '\0') return 1;
  std::size_t used = 0;
  int n = 0;
  try {
    n = std::stoi(env, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != std::char_traits<char>::length(env) || n < 1)
    throw ConfigError(std::string("AMLNET_NUM_WORKERS: expected a positive integer, got '") + env +
                      "'");
  return n;
}

std::vector<DecoderKind> parse_decoders(const std::string& text, std::vector<DecoderKind> fallback) {
  if (text.empty()) return fallback;
  std::vector<DecoderKind> out;
  std::stringstream in(text);
  for (std::string item; std::getline(in, item, ',');) {
    std::string key;
    for (char c : item)
      if (!std::isspace(static_cast<unsigned char>(c)))
        key += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    DecoderKind d;
    if (key == "P1") {
      d = DecoderKind::kP1;
    } else if (key == "P2") {
      d = DecoderKind::kP2;
    } else if (key == "S") {
      d = DecoderKind::kS;
    } else {
      throw ConfigError("--decoders: unknown decoder '" + item + "' (expected P1, P2 or S)");
    }
    if (std::find(out.begin(), out.end(), d) == out.end()) out.push_back(d);
  }
  if (out.empty()) throw ConfigError("--decoders: no decoder given");
  return out;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + path.string());
  f << std::setprecision(17);
  return f;
}

// Written before any other artifact of the command.
void write_manifest(const fs::path& dir, const std::string& command, const RunConfig& cfg,
                    const Options& opt, const std::vector<std::string>& layout, int workers) {
  fs::create_directories(dir);
  const std::string text = to_text(cfg);
  Json j;
  j["command"] = command;
  j["code_version"] = kVersion;
  j["config_hash"] = fnv1a_hex(text + "\namlnet " + kVersion);
  j["seed"] = cfg.train.seed;
  j["workers"] = workers;
  Json inputs;
  inputs["config"] = opt.config;
  if (!opt.checkpoint.empty()) {
    inputs["checkpoint"] = opt.checkpoint;
    inputs["checkpoint_hash"] = fnv1a_hex(read_file(opt.checkpoint));
  }
  j["inputs"] = inputs;
  j["layout"] = layout;
  j["config"] = text;
  auto f = open_out(dir / "manifest.json");
  f << j.dump(2) << '\n';
  auto c = open_out(dir / "config.txt");
  c << text;
}

struct Prediction {
  GaussianForecast forecast;
  Eigen::MatrixXd hidden;
};

// Windows are split across workers; every worker owns a copy of the model.
std::vector<Prediction> predict_all(const AMLNet& model,
                                    const std::vector<data::ForecastWindow>& windows,
                                    DecoderKind decoder, int workers) {
  std::vector<Prediction> out(windows.size());
  const auto run = [&](std::size_t first, std::size_t stride) {
    AMLNet local = model;
    for (std::size_t i = first; i < windows.size(); i += stride) {
      AMLNet::PredictTrace trace;
      out[i].forecast = local.predict(windows[i], decoder, &trace);
      out[i].hidden = std::move(trace.last_hidden);
    }
  };
  const auto n = static_cast<std::size_t>(std::max(1, workers));
  if (n == 1) {
    run(0, 1);
    return out;
  }
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < n; ++w) pool.emplace_back(run, w, n);
  for (auto& t : pool) t.join();
  return out;
}

GaussianForecast denormalize(const GaussianForecast& f, const data::NormStats& s) {
  return {data::denormalize(f.mu, s), f.sigma * s.std};
}

data::ForecastWindow denormalize(const data::ForecastWindow& w, const data::NormStats& s) {
  data::ForecastWindow out = w;
  out.y_past = data::denormalize(w.y_past, s);
  if (w.has_future()) out.y_future = data::denormalize(w.y_future, s);
  return out;
}

struct Loaded {
  RunConfig cfg;
  PreparedData data;
  Checkpoint checkpoint;
  std::vector<data::ForecastWindow> test;  // original units
};

Loaded load_for_inference(const Options& opt, std::ostream& err) {
  if (opt.checkpoint.empty()) throw ConfigError("--checkpoint is required");
  Loaded l;
  l.cfg = load_run_config(opt);
  l.checkpoint = load_checkpoint(opt.checkpoint);
  const ModelConfig& have = l.checkpoint.config;
  const ModelConfig& want = l.cfg.model;
  const auto check = [](const char* what, int a, int b) {
    if (a != b)
      throw ConfigError(std::string("checkpoint ") + what + " " + std::to_string(a) +
                        " does not match config " + what + " " + std::to_string(b));
  };
  check("horizon", have.horizon, want.horizon);
  check("input_length", have.input_length, want.input_length);
  check("n_covariates", have.n_covariates, want.n_covariates);
  l.data = prepare_data(l.cfg.data);
  if (l.data.windows.test.empty()) throw ConfigError("config yields no test windows");
  if (l.checkpoint.norm_stats.size() != l.data.norm_stats.size())
    err << "warning: checkpoint was trained on " << l.checkpoint.norm_stats.size()
        << " series, data has " << l.data.norm_stats.size() << "\n";
  for (const auto& w : l.data.windows.test)
    l.test.push_back(denormalize(w, l.data.norm_stats.at(static_cast<std::size_t>(w.series_id))));
  return l;
}

std::vector<GaussianForecast> to_original_units(const Loaded& l,
                                                const std::vector<Prediction>& p) {
  std::vector<GaussianForecast> out;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto& stats = l.data.norm_stats.at(static_cast<std::size_t>(l.test[i].series_id));
    out.push_back(denormalize(p[i].forecast, stats));
  }
  return out;
}

int cmd_train(const Options& opt, std::ostream& out) {
  if (opt.out.empty()) throw ConfigError("--out is required");
  const RunConfig cfg = load_run_config(opt);
  const int workers = worker_count();
  const fs::path dir = opt.out;
  write_manifest(dir, "train", cfg, opt,
                 {"manifest.json", "config.txt", "losses.jsonl", "history.jsonl",
                  "checkpoint.json"},
                 workers);
  const PreparedData data = prepare_data(cfg.data);
  out << "data: " << data.windows.training.size() << " training, "
      << data.windows.validation.size() << " validation, " << data.windows.test.size()
      << " test windows\n";

  auto losses = open_out(dir / "losses.jsonl");
  auto history = open_out(dir / "history.jsonl");
  Trainer trainer(cfg.model, cfg.train);
  FitHooks hooks;
  hooks.on_step = [&](const losses::LossReport& r) { losses << r.to_json_lines(); };
  hooks.on_epoch = [&](const EpochRecord& r) {
    history << r.to_json() << '\n';
    history.flush();
    out << "epoch " << r.epoch << "  nll(S) " << std::setprecision(5) << r.train_nll_s
        << "  val rho50(S) " << r.val_rho50_s << (r.improved ? "  *" : "") << '\n';
  };
  const FitResult result = trainer.fit(data.windows.training, data.windows.validation, hooks);
  auto best = trainer.best_model();
  save_checkpoint(dir / "checkpoint.json", *best, data.norm_stats);
  out << "best epoch " << result.best_epoch << ", val rho50(S) " << result.best_val_rho50
      << (result.early_stopped ? " (early stop)" : "") << '\n';
  return kExitOk;
}

int cmd_evaluate(const Options& opt, std::ostream& out, std::ostream& err) {
  if (opt.out.empty()) throw ConfigError("--out is required");
  const auto decoders =
      parse_decoders(opt.decoders, {DecoderKind::kP1, DecoderKind::kP2, DecoderKind::kS});
  const int workers = worker_count();
  Loaded l = load_for_inference(opt, err);
  const fs::path dir = opt.out;
  write_manifest(dir, "evaluate", l.cfg, opt,
                 {"manifest.json", "config.txt", "forecasts.csv", "report.json", "report.csv"},
                 workers);

  metrics::MetricReport report;
  report.dataset = l.cfg.data.source == "csv" ? l.cfg.data.csv_path : l.cfg.data.kind;
  auto forecasts = open_out(dir / "forecasts.csv");
  forecasts << "decoder,series_id,t0,step,y,mu,sigma\n";
  for (DecoderKind d : decoders) {
    const auto pred = predict_all(*l.checkpoint.model, l.data.windows.test, d, workers);
    const auto f = to_original_units(l, pred);
    std::vector<Eigen::MatrixXd> hidden;
    if (l.cfg.model.horizon > 6)
      for (const auto& p : pred) hidden.push_back(p.hidden);
    report.rows.push_back(metrics::score(to_string(d), l.test, f, hidden));
    for (std::size_t i = 0; i < f.size(); ++i)
      for (Eigen::Index t = 0; t < f[i].horizon(); ++t)
        forecasts << to_string(d) << ',' << l.test[i].series_id << ',' << l.test[i].t0 << ','
                  << t << ',' << l.test[i].y_future(t) << ',' << f[i].mu(t) << ','
                  << f[i].sigma(t) << '\n';
  }
  std::vector<Eigen::VectorXd> naive;
  for (const auto& w : l.test) naive.push_back(metrics::persistence_baseline(w, l.data.steps_per_day));
  report.rows.push_back(metrics::score_point("persistence", l.test, naive));

  if (opt.latency) {
    const auto lat = metrics::measure_latency_interleaved(*l.checkpoint.model,
                                                          l.data.windows.test, decoders,
                                                          opt.latency_runs);
    for (std::size_t i = 0; i < decoders.size(); ++i) report.rows[i].latency = lat[i];
  }
  auto json = open_out(dir / "report.json");
  json << report.to_json() << '\n';
  auto csv = open_out(dir / "report.csv");
  csv << report.to_csv();
  for (const auto& r : report.rows) {
    out << std::left << std::setw(12) << r.decoder << " rho50 " << std::setprecision(5)
        << r.rho50 << "  rho90 " << r.rho90 << "  dtw " << r.mean_dtw;
    if (r.latency) out << "  latency " << r.latency->mean_ms << " ms";
    out << '\n';
  }
  return kExitOk;
}

int cmd_forecast(const Options& opt, std::ostream& out, std::ostream& err) {
  if (opt.out.empty()) throw ConfigError("--out is required");
  const auto decoders = parse_decoders(opt.decoders, {DecoderKind::kS});
  const int workers = worker_count();
  Loaded l = load_for_inference(opt, err);
  const fs::path dir = opt.out;
  write_manifest(dir, "forecast", l.cfg, opt, {"manifest.json", "config.txt", "forecast.csv"},
                 workers);
  auto csv = open_out(dir / "forecast.csv");
  csv << "decoder,series_id,t0,step,mu,sigma,q50,q90\n";
  std::vector<data::ForecastWindow> inputs = l.data.windows.test;
  for (auto& w : inputs) w.y_future.resize(0);
  for (DecoderKind d : decoders) {
    const auto f = to_original_units(l, predict_all(*l.checkpoint.model, inputs, d, workers));
    for (std::size_t i = 0; i < f.size(); ++i) {
      const Eigen::VectorXd q50 = metrics::gaussian_quantile(f[i], 0.5);
      const Eigen::VectorXd q90 = metrics::gaussian_quantile(f[i], 0.9);
      for (Eigen::Index t = 0; t < f[i].horizon(); ++t)
        csv << to_string(d) << ',' << inputs[i].series_id << ',' << inputs[i].t0 << ',' << t
            << ',' << f[i].mu(t) << ',' << f[i].sigma(t) << ',' << q50(t) << ',' << q90(t)
            << '\n';
    }
  }
  out << "wrote " << inputs.size() << " forecasts per decoder to " << (dir / "forecast.csv").string()
      << '\n';
  return kExitOk;
}

int cmd_diagnose(const Options& opt, std::ostream& out, std::ostream& err) {
  if (opt.out.empty()) throw ConfigError("--out is required");
  const auto decoders =
      parse_decoders(opt.decoders, {DecoderKind::kP1, DecoderKind::kP2, DecoderKind::kS});
  const int workers = worker_count();
  Loaded l = load_for_inference(opt, err);
  const fs::path dir = opt.out;
  std::vector<std::string> layout{"manifest.json", "config.txt", "summary.csv", "dtw.csv",
                                  "traces.csv"};
  for (DecoderKind d : decoders) layout.push_back("heatmap_" + to_string(d) + ".csv");
  write_manifest(dir, "diagnose", l.cfg, opt, layout, workers);

  auto summary = open_out(dir / "summary.csv");
  summary << "decoder,mean_knn_cosine,mean_dtw,windows\n";
  auto dtw = open_out(dir / "dtw.csv");
  dtw << "decoder,series_id,t0,dtw\n";
  auto traces = open_out(dir / "traces.csv");
  traces << "decoder,series_id,t0,step,y,mu\n";
  const bool knn_defined = l.cfg.model.horizon > 6;
  for (DecoderKind d : decoders) {
    const std::string name = to_string(d);
    const auto pred = predict_all(*l.checkpoint.model, l.data.windows.test, d, workers);
    const auto f = to_original_units(l, pred);
    const auto th = static_cast<Eigen::Index>(l.cfg.model.horizon);
    Eigen::MatrixXd heat = Eigen::MatrixXd::Zero(th, th);
    double knn = 0.0, dtw_total = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
      const Eigen::MatrixXd dist = metrics::cosine_distance_matrix(pred[i].hidden);
      heat += dist;
      if (knn_defined) knn += metrics::mean_knn_cosine(dist);
      const double dd = metrics::dtw(f[i].mu, l.test[i].y_future);
      dtw_total += dd;
      dtw << name << ',' << l.test[i].series_id << ',' << l.test[i].t0 << ',' << dd << '\n';
      for (Eigen::Index t = 0; t < th; ++t)
        traces << name << ',' << l.test[i].series_id << ',' << l.test[i].t0 << ',' << t << ','
               << l.test[i].y_future(t) << ',' << f[i].mu(t) << '\n';
    }
    const double n = static_cast<double>(f.size());
    heat /= n;
    auto hm = open_out(dir / ("heatmap_" + name + ".csv"));
    for (Eigen::Index r = 0; r < th; ++r) {
      for (Eigen::Index c = 0; c < th; ++c) hm << (c ? "," : "") << heat(r, c);
      hm << '\n';
    }
    summary << name << ',';
    if (knn_defined) {
      summary << knn / n;
    } else {
      summary << "NA";
    }
    summary << ',' << dtw_total / n << ',' << f.size() << '\n';
    out << name << ": mean knn cosine "
        << (knn_defined ? std::to_string(knn / n) : std::string("NA")) << ", mean dtw "
        << dtw_total / n << '\n';
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"AMLNet probabilistic multi-horizon forecaster", "amlnet"};
  app.require_subcommand(1);
  Options opt;

  const auto add_common = [&](CLI::App* sub, bool needs_checkpoint) {
    sub->add_option("--config", opt.config, "run configuration (key = value)")->required();
    sub->add_option("--out", opt.out, "output directory");
    sub->add_option("--seed", opt.seed, "overrides the configured seed");
    if (needs_checkpoint) sub->add_option("--checkpoint", opt.checkpoint, "trained checkpoint");
  };
  CLI::App* train = app.add_subcommand("train", "fit a model and write its best checkpoint");
  add_common(train, false);
  CLI::App* evaluate = app.add_subcommand("evaluate", "score decoders on the test range");
  add_common(evaluate, true);
  evaluate->add_option("--decoders", opt.decoders, "comma-separated subset of P1,P2,S");
  evaluate->add_flag("--latency", opt.latency, "also time inference (10 runs)");
  evaluate->add_option("--latency-runs", opt.latency_runs)->check(CLI::Range(2, 1000));
  CLI::App* forecast = app.add_subcommand("forecast", "write forecasts for the test windows");
  add_common(forecast, true);
  forecast->add_option("--decoders", opt.decoders, "comma-separated subset of P1,P2,S");
  CLI::App* diagnose = app.add_subcommand("diagnose", "hidden-state and alignment diagnostics");
  add_common(diagnose, true);
  diagnose->add_option("--decoders", opt.decoders, "comma-separated subset of P1,P2,S");

  std::vector<std::string> storage(args);
  if (storage.empty()) storage.emplace_back("amlnet");
  std::vector<char*> argv;
  for (auto& a : storage) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (train->parsed()) return cmd_train(opt, out);
    if (evaluate->parsed()) return cmd_evaluate(opt, out, err);
    if (forecast->parsed()) return cmd_forecast(opt, out, err);
    return cmd_diagnose(opt, out, err);
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
}

}  // namespace amlnet::cli
