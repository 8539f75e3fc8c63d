#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "surconfort/bench.hpp"
#include "surconfort/errors.hpp"
#include "surconfort/io.hpp"

namespace fs = std::filesystem;
using namespace surconfort;

namespace {

// Flags shared by every subcommand that needs data or experiment settings.
// Unset flags leave the config file (or the defaults) alone.
struct CommonFlags {
  std::optional<std::string> config;
  std::optional<std::string> data_dir;
  std::optional<int> slots;
  std::optional<std::uint64_t> world_seed;
  std::optional<int> stations;
  std::optional<int> days;
  std::optional<std::string> topology;
  std::optional<double> report_rate;
  std::optional<double> noise;
  std::optional<int> batch_size;
  std::optional<int> epochs;
  std::optional<int> patience;
  std::optional<double> learning_rate;
  std::optional<double> zeta;
  std::optional<std::string> graph;
  std::optional<double> dmax;
  std::optional<int> edges_per_batch;
  std::optional<std::string> normalization;
  std::optional<double> delta;
  std::optional<int> k;
  std::optional<double> gamma;
  std::optional<int> rounds;
  bool truth = false;
};

void add_common(CLI::App* app, CommonFlags& f, bool model_flags) {
  app->add_option("--config", f.config, "JSON experiment config; flags override it")->check(CLI::ExistingFile);
  app->add_option("--data", f.data_dir, "directory with stations.csv, edges.csv, reports.csv (default: synthetic world)")
      ->check(CLI::ExistingDirectory);
  app->add_option("--slots", f.slots, "time slots per day");
  app->add_option("--world-seed", f.world_seed, "synthetic world seed");
  app->add_option("--stations", f.stations, "synthetic world station count");
  app->add_option("--days", f.days, "synthetic world day count");
  app->add_option("--topology", f.topology, "synthetic world topology: ring or line");
  app->add_option("--report-rate", f.report_rate, "synthetic reports per cell (Poisson mean)");
  app->add_option("--noise", f.noise, "synthetic report noise std");
  if (!model_flags) return;
  app->add_option("--batch-size", f.batch_size, "mini-batch size");
  app->add_option("--epochs", f.epochs, "maximum epochs");
  app->add_option("--patience", f.patience, "early-stopping patience in epochs");
  app->add_option("--lr", f.learning_rate, "Adam learning rate");
  app->add_option("--zeta", f.zeta, "graph-regularisation weight");
  app->add_option("--graph", f.graph, "station graph: rail or cosine");
  app->add_option("--dmax", f.dmax, "proximity cut-off in km");
  app->add_option("--edges-per-batch", f.edges_per_batch, "edges sampled per partition and mini-batch");
  app->add_option("--normalization", f.normalization, "edge-sum scaling: mean or sum");
  app->add_option("--delta", f.delta, "diffusion coefficient");
  app->add_option("--k", f.k, "neighbours per node in diffusion graphs");
  app->add_option("--gamma", f.gamma, "descriptor affinity exponent");
  app->add_option("--rounds", f.rounds, "LP-DSSL rounds");
}

bench::ExperimentConfig resolve(const CommonFlags& f) {
  bench::ExperimentConfig cfg;
  if (f.config) cfg = bench::load_config(*f.config);
  if (f.data_dir) cfg.data.directory = fs::path(*f.data_dir);
  if (f.slots) {
    cfg.data.slots = *f.slots;
    cfg.data.synthetic.slots_per_day = *f.slots;
  }
  auto& w = cfg.data.synthetic;
  if (f.world_seed) w.seed = *f.world_seed;
  if (f.stations) w.n_stations = *f.stations;
  if (f.days) w.n_days = *f.days;
  if (f.topology) {
    if (*f.topology == "ring") {
      w.topology = synth::Topology::kRing;
    } else if (*f.topology == "line") {
      w.topology = synth::Topology::kLine;
    } else {
      throw ArgumentError("unknown topology '" + *f.topology + "' (expected ring or line)");
    }
  }
  if (f.report_rate) w.report_rate = *f.report_rate;
  if (f.noise) w.noise_std = *f.noise;
  if (f.batch_size) cfg.train.batch_size = *f.batch_size;
  if (f.epochs) cfg.train.max_epochs = *f.epochs;
  if (f.patience) cfg.train.patience = *f.patience;
  if (f.learning_rate) cfg.train.adam.learning_rate = *f.learning_rate;
  if (f.zeta) cfg.ngm.zeta = *f.zeta;
  if (f.graph) cfg.station_graph = graphssl::parse_graph_source(*f.graph);
  if (f.dmax) cfg.max_distance_km = *f.dmax;
  if (f.edges_per_batch) cfg.ngm.edges_per_batch = *f.edges_per_batch;
  if (f.normalization) cfg.ngm.normalization = graphssl::parse_edge_normalization(*f.normalization);
  if (f.delta) cfg.diffusion.delta = *f.delta;
  if (f.k) {
    cfg.diffusion.k = *f.k;
    cfg.ngm.natural_k = *f.k;
  }
  if (f.gamma) cfg.diffusion.gamma = *f.gamma;
  if (f.rounds) cfg.diffusion.rounds = *f.rounds;
  if (f.truth) cfg.evaluate_truth = true;
  cfg.validate();
  return cfg;
}

std::string label_name(int cls) {
  static const char* kNames[] = {"able to sit", "standing room", "crowded", "unable to move"};
  return kNames[cls];
}

void print_log(const nn::TrainLog& log) {
  std::printf("epochs run: %zu, best epoch: %d, best validation accuracy: %.4f (%s)\n", log.train_loss.size(),
              log.best_epoch + 1, log.best_validation_accuracy(), log.stop_reason.c_str());
}

// Transductive diffusion over labeled cells plus a seeded sample of the
// unlabeled pool; writes one prediction per graph node.
void run_diffusion(const data::SplitDataset& split, const bench::ExperimentConfig& cfg, bool spreading,
                   std::uint64_t seed, const fs::path& out) {
  std::vector<std::size_t> pool(split.u());
  std::iota(pool.begin(), pool.end(), 0);
  auto rng = make_rng(seed, "diffusion_pool");
  const std::size_t take = std::min(cfg.diffusion.unlabeled_cap, pool.size());
  for (std::size_t i = 0; i < take && i + 1 < pool.size(); ++i) {
    std::swap(pool[i], pool[i + static_cast<std::size_t>(uniform_index(rng, pool.size() - i))]);
  }
  pool.resize(take);
  std::sort(pool.begin(), pool.end());
  std::vector<data::Sample> nodes(split.labeled.begin(), split.labeled.end());
  std::vector<int> labels;
  for (const auto& s : split.labeled) labels.push_back(*s.label);
  for (auto i : pool) {
    nodes.push_back(split.unlabeled[i]);
    labels.push_back(-1);
  }
  if (nodes.size() < 2) throw DataError("diffusion needs at least two samples");
  const auto x = nn::encode_features(split, nodes);
  const int k = std::min<int>(cfg.diffusion.k, static_cast<int>(nodes.size()) - 1);
  const auto affinity = diffusion::natural_affinity(x, k);
  const auto res = spreading ? diffusion::label_spreading(affinity, labels, cfg.diffusion.delta, cfg.diffusion.solver)
                             : diffusion::label_propagation(affinity, labels, cfg.diffusion.solver);
  std::string csv = "station,date,slot,labeled,class\n";
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& s = nodes[i];
    csv += std::to_string(s.station_id) + ',' + data::format_date(split.calendar.dates[static_cast<std::size_t>(s.day)]) +
           ',' + std::to_string(s.time_slot) + ',' + (labels[i] >= 0 ? "1" : "0") + ',' +
           std::to_string(res.predictions[i]) + '\n';
  }
  io::write_file_atomic(out, csv);
  std::printf("%s: %zu nodes (%zu labeled), %d iterations, converged=%s -> %s\n", spreading ? "ls" : "lp", nodes.size(),
              split.l(), res.iterations, res.converged ? "yes" : "no", out.string().c_str());
}

std::vector<std::string> argv_strings(int argc, char** argv) { return {argv, argv + argc}; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Railroad-graph-regularised congestion classification from sparse passenger reports"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "write a synthetic world as CSV files");
  CommonFlags gen_flags;
  std::string gen_out = "world";
  add_common(gen, gen_flags, false);
  gen->add_option("--out", gen_out, "output directory");

  // train
  auto* train = app.add_subcommand("train", "train one model and save a checkpoint");
  CommonFlags train_flags;
  std::string method = "surconfort";
  double ratio = 1.0;
  std::uint64_t seed = 1;
  std::string train_out = "model.ckpt";
  add_common(train, train_flags, true);
  train->add_option("--method", method, "surconfort, ngm-natural, snn, lp, ls or lp-dssl");
  train->add_option("--label-ratio,--ratio", ratio, "fraction of labeled cells kept");
  train->add_option("--seed", seed, "training seed");
  train->add_option("--out", train_out, "checkpoint path (predictions CSV for lp and ls)");

  // eval
  auto* eval = app.add_subcommand("eval", "accuracy of a checkpoint on labeled cells");
  CommonFlags eval_flags;
  std::string eval_ckpt;
  std::optional<std::string> eval_out;
  add_common(eval, eval_flags, false);
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint to evaluate")->required()->check(CLI::ExistingFile);
  eval->add_flag("--truth", eval_flags.truth, "score every in-service cell against the ground truth");
  eval->add_option("--out", eval_out, "per-station accuracy CSV");

  // sweep / ablate / sensitivity
  struct Harness {
    CommonFlags flags;
    std::vector<std::string> methods;
    std::vector<double> ratios;
    std::optional<int> folds;
    std::vector<std::uint64_t> seeds;
    std::optional<int> threads;
    std::optional<std::string> out;
    std::vector<double> zetas;
  };
  Harness sweep_h, ablate_h, sens_h;
  auto add_harness = [](CLI::App* sub, Harness& h) {
    add_common(sub, h.flags, true);
    sub->add_option("--folds", h.folds, "cross-validation folds");
    sub->add_option("--seeds", h.seeds, "seeds")->delimiter(',');
    sub->add_option("--threads", h.threads, "worker threads");
    sub->add_option("--out", h.out, "output directory");
    sub->add_flag("--truth", h.flags.truth, "score against the ground-truth field");
  };
  auto* sweep = app.add_subcommand("sweep", "methods x label ratios x folds x seeds");
  add_harness(sweep, sweep_h);
  sweep->add_option("--methods", sweep_h.methods, "methods")->delimiter(',');
  sweep->add_option("--label-ratio,--ratios", sweep_h.ratios, "label ratios")->delimiter(',');
  auto* ablate = app.add_subcommand("ablate", "surconfort vs ngm-natural vs snn");
  add_harness(ablate, ablate_h);
  ablate->add_option("--label-ratio,--ratios", ablate_h.ratios, "label ratios")->delimiter(',');
  auto* sens = app.add_subcommand("sensitivity", "accuracy over a grid of zeta values");
  add_harness(sens, sens_h);
  sens->add_option("--zetas", sens_h.zetas, "zeta grid")->delimiter(',');
  sens->add_option("--label-ratio,--ratio", sens_h.ratios, "label ratio")->delimiter(',');

  // forecast
  auto* fc = app.add_subcommand("forecast", "congestion class for one station, date and time");
  std::string fc_ckpt, fc_date, fc_time;
  int fc_station = 0;
  std::optional<std::string> fc_holidays;
  fc->add_option("--checkpoint", fc_ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
  fc->add_option("--station", fc_station, "station id")->required();
  fc->add_option("--date", fc_date, "YYYY-MM-DD")->required();
  fc->add_option("--time", fc_time, "HH:MM")->required();
  fc->add_option("--holidays", fc_holidays, "holidays.csv")->check(CLI::ExistingFile);

  // graph-export
  auto* gx = app.add_subcommand("graph-export", "write the station adjacency as i,j,weight CSV");
  CommonFlags gx_flags;
  std::string gx_out = "adjacency.csv";
  add_common(gx, gx_flags, false);
  gx->add_option("--graph", gx_flags.graph, "rail or cosine");
  gx->add_option("--dmax", gx_flags.dmax, "proximity cut-off in km");
  gx->add_option("--out", gx_out, "output CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed()) {
      auto cfg = resolve(gen_flags);
      const auto world = synth::generate_world(cfg.data.synthetic);
      synth::write_world(world, gen_out);
      std::printf("wrote %d stations, %d days, %zu reports to %s\n", world.network.size(), world.calendar.size(),
                  world.reports.size(), gen_out.c_str());
    } else if (train->parsed()) {
      auto cfg = resolve(train_flags);
      const auto m = bench::parse_method(method);
      if (!(ratio > 0.0 && ratio <= 1.0)) throw ArgumentError("--label-ratio must lie in (0, 1]");
      const auto ds = bench::load_dataset(cfg.data);
      const auto split = data::mask_labels(ds.full, ratio, seed);
      std::printf("%zu labeled cells kept of %zu, %zu unlabeled\n", split.l(), ds.full.l(), split.u());
      auto tc = cfg.train;
      tc.seed = seed;
      nn::TrainResult result;
      switch (m) {
        case bench::Method::kSnn:
          result = nn::train_supervised(split, tc);
          break;
        case bench::Method::kSurconfort:
        case bench::Method::kNgmNatural: {
          auto ngm = cfg.ngm;
          ngm.source = m == bench::Method::kSurconfort ? cfg.station_graph : graphssl::GraphSource::kNatural;
          const auto adj = m == bench::Method::kSurconfort
                               ? bench::station_adjacency(ds.network, cfg.station_graph, cfg.max_distance_km)
                               : railgraph::RailAdjacency();
          graphssl::GraphStats stats;
          result = graphssl::train_surconfort(split, adj, ngm, tc, &stats);
          std::printf("graph edges: LL %zu, LU %zu, UU %zu\n", stats.partition_sizes[0], stats.partition_sizes[1],
                      stats.partition_sizes[2]);
          break;
        }
        case bench::Method::kLpDssl: {
          auto r = diffusion::lp_dssl_train(split, cfg.diffusion, tc);
          std::printf("best round: %d\n", r.best_round);
          result = std::move(r.best);
          break;
        }
        case bench::Method::kLp:
        case bench::Method::kLs:
          run_diffusion(split, cfg, m == bench::Method::kLs, seed, train_out);
          return 0;
        default:
          throw ArgumentError("train supports surconfort, ngm-natural, snn, lp, ls and lp-dssl");
      }
      print_log(result.log);
      nn::save_checkpoint(result.model, train_out);
      std::printf("checkpoint written to %s\n", train_out.c_str());
    } else if (eval->parsed()) {
      auto cfg = resolve(eval_flags);
      const auto model = nn::load_checkpoint(eval_ckpt);
      const auto ds = bench::load_dataset(cfg.data);
      std::vector<data::Sample> cells = ds.full.labeled;
      if (cfg.evaluate_truth) {
        if (!ds.truth) throw ArgumentError("--truth needs synthetic data or a truth.csv");
        cells.clear();
        for (const auto* part : {&ds.full.labeled, &ds.full.unlabeled}) {
          for (auto s : *part) {
            const auto it = ds.truth->find(ds.full.key(s));
            if (it == ds.truth->end()) continue;
            s.label = it->second;
            cells.push_back(s);
          }
        }
      }
      const auto ev = bench::evaluate(model, ds.full.stations, ds.full.slots, cells);
      std::printf("accuracy %.4f (%zu / %zu)\n", ev.accuracy, ev.correct, ev.total);
      if (eval_out) {
        std::string csv = "station,correct,total,accuracy\n";
        for (const auto& [st, sc] : ev.per_station) {
          char buf[128];
          std::snprintf(buf, sizeof buf, "%d,%zu,%zu,%.17g\n", st, sc.correct, sc.total,
                        static_cast<double>(sc.correct) / static_cast<double>(sc.total));
          csv += buf;
        }
        io::write_file_atomic(*eval_out, csv);
      }
    } else if (sweep->parsed() || ablate->parsed() || sens->parsed()) {
      Harness& h = sweep->parsed() ? sweep_h : ablate->parsed() ? ablate_h : sens_h;
      auto cfg = resolve(h.flags);
      if (!h.methods.empty()) {
        cfg.methods.clear();
        for (const auto& name : h.methods) cfg.methods.push_back(bench::parse_method(name));
      }
      if (sens->parsed()) {
        if (h.ratios.size() > 1) throw ArgumentError("sensitivity takes a single label ratio");
        if (!h.ratios.empty()) cfg.sensitivity_ratio = h.ratios.front();
        if (!h.zetas.empty()) cfg.zeta_grid = h.zetas;
      } else if (!h.ratios.empty()) {
        cfg.ratios = h.ratios;
      }
      if (h.folds) cfg.folds = *h.folds;
      if (!h.seeds.empty()) cfg.seeds = h.seeds;
      if (h.threads) cfg.threads = *h.threads;
      if (h.out) cfg.output_dir = *h.out;
      cfg.validate();
      const auto ds = bench::load_dataset(cfg.data);
      std::vector<bench::ResultRecord> records;
      if (sweep->parsed()) {
        records = bench::run_sweep(ds, cfg);
      } else if (ablate->parsed()) {
        records = bench::run_ablation(ds, cfg);
      } else {
        records = bench::run_sensitivity(ds, cfg);
      }
      bench::ReportOptions opts;
      opts.ablation = ablate->parsed();
      opts.config_json = bench::config_to_json(cfg);
      opts.command_line = argv_strings(argc, argv);
      bench::emit_report(records, cfg.output_dir, opts);
      if (sens->parsed()) {
        for (const auto& row : bench::sensitivity_curve(records)) {
          std::printf("zeta %-8g %s\n", row.zeta, bench::format_cell(row.cell.mean, row.cell.std).c_str());
        }
      } else {
        std::fputs(bench::markdown_table(records).c_str(), stdout);
      }
      std::printf("reports written to %s\n", cfg.output_dir.string().c_str());
    } else if (fc->parsed()) {
      const auto model = nn::load_checkpoint(fc_ckpt);
      data::HolidayCalendar holidays;
      if (fc_holidays) holidays = data::HolidayCalendar(data::read_holidays_csv(*fc_holidays));
      const auto date = data::parse_date(fc_date);
      int hh = 0, mm = 0;
      char tail = 0;
      if (std::sscanf(fc_time.c_str(), "%d:%d%c", &hh, &mm, &tail) != 2 || hh < 0 || hh > 23 || mm < 0 || mm > 59) {
        throw ArgumentError("--time must be HH:MM, got '" + fc_time + "'");
      }
      const auto r = bench::forecast(model, fc_station, date, hh * 60 + mm, holidays);
      std::printf("class %d (%s)\n", r.predicted_class, label_name(r.predicted_class).c_str());
      for (int c = 0; c < data::kNumClasses; ++c) std::printf("  p[%d] = %.6f\n", c, r.confidences[c]);
    } else if (gx->parsed()) {
      auto cfg = resolve(gx_flags);
      railgraph::RailNetwork network;
      if (cfg.data.directory) {
        network = railgraph::read_network(*cfg.data.directory / "stations.csv", *cfg.data.directory / "edges.csv");
      } else {
        network = synth::generate_network(cfg.data.synthetic);
      }
      const auto adj = bench::station_adjacency(network, cfg.station_graph, cfg.max_distance_km);
      railgraph::write_adjacency_csv(adj, gx_out);
      std::printf("%zu directed entries over %d stations -> %s\n", adj.entries().size(), adj.size(), gx_out.c_str());
    }
  } catch (const ArgumentError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
