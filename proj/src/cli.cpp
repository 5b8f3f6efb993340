#include "hivae/cli.hpp"

#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "hivae/benchmark.hpp"
#include "hivae/errors.hpp"
#include "hivae/imputation.hpp"
#include "hivae/tabular.hpp"
#include "hivae/training.hpp"

namespace hivae {

namespace {

struct TrainFlags {
  TrainConfig config;
  std::string encoder = "dropout";
  bool no_norm = false;

  TrainConfig resolve() const {
    TrainConfig c = config;
    if (encoder == "factorized") c.encoder = EncoderMode::Factorized;
    else if (encoder == "dropout") c.encoder = EncoderMode::InputDropout;
    else throw ConfigError("unknown encoder '" + encoder + "'");
    c.normalization = !no_norm;
    return c;
  }
};

void add_train_flags(CLI::App* app, TrainFlags& f) {
  auto& c = f.config;
  app->add_option("--dim-z", c.dim_z, "Latent z dimension K")->capture_default_str();
  app->add_option("--dim-s", c.dim_s, "Mixture components L")->capture_default_str();
  app->add_option("--dim-y", c.dim_y, "Per-attribute y dimension")->capture_default_str();
  app->add_option("--layers", c.layers, "Dense layers per network (1 or 2)")->capture_default_str();
  app->add_option("--hidden", c.hidden, "Hidden width of 2-layer networks (0 = automatic)")
      ->capture_default_str();
  app->add_option("--epochs", c.epochs)->capture_default_str();
  app->add_option("--batch", c.batch_size, "Minibatch size")->capture_default_str();
  app->add_option("--tau-start", c.tau_start, "Initial Gumbel-softmax temperature")
      ->capture_default_str();
  app->add_option("--tau-end", c.tau_end, "Final Gumbel-softmax temperature")->capture_default_str();
  app->add_option("--lr", c.adam.lr, "Adam learning rate")->capture_default_str();
  app->add_option("--seed", c.seed)->capture_default_str();
  app->add_option("--encoder", f.encoder, "Recognition model: dropout or factorized")
      ->check(CLI::IsMember({"dropout", "factorized"}))
      ->capture_default_str();
  app->add_flag("--no-norm", f.no_norm, "Disable batch normalization of numeric attributes");
  app->add_flag("--exact-kl", c.exact_kl_z, "Enumerate all mixture components in KL_z");
}

std::optional<std::filesystem::path> opt_path(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return std::filesystem::path(s);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
}

std::size_t resolve_column(const Schema& schema, const std::string& target) {
  if (auto idx = schema.index_of(target)) return *idx;
  try {
    std::size_t pos = 0;
    const auto idx = std::stoul(target, &pos);
    if (pos == target.size() && idx < schema.size()) return idx;
  } catch (const std::exception&) {
  }
  throw ConfigError("unknown target column '" + target + "'");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Heterogeneous-incomplete VAE: fit, impute and benchmark mixed-type tables", "hivae"};
  app.require_subcommand(1);

  // train
  auto* train_cmd = app.add_subcommand("train", "Fit a model and write it to --out");
  std::string data, types, mask, out_path;
  TrainFlags tflags;
  train_cmd->add_option("--data", data, "Data CSV")->required();
  train_cmd->add_option("--types", types, "Types CSV (name,kind,R)")->required();
  train_cmd->add_option("--mask", mask, "Mask CSV (1 = observed)");
  train_cmd->add_option("--out", out_path, "Model file")->required();
  add_train_flags(train_cmd, tflags);

  // impute
  auto* impute_cmd = app.add_subcommand("impute", "Fill missing cells with a trained model");
  std::string model_path, method = "map";
  std::optional<std::uint64_t> impute_seed;
  impute_cmd->add_option("--model", model_path)->required();
  impute_cmd->add_option("--data", data)->required();
  impute_cmd->add_option("--types", types)->required();
  impute_cmd->add_option("--mask", mask);
  impute_cmd->add_option("--method", method, "map or sample")
      ->check(CLI::IsMember({"map", "sample"}))
      ->capture_default_str();
  impute_cmd->add_option("--seed", impute_seed, "Seed for --method sample");
  impute_cmd->add_option("--out", out_path, "Completed CSV")->required();

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "Score an imputed table against the truth");
  std::string truth, imputed;
  eval_cmd->add_option("--truth", truth)->required();
  eval_cmd->add_option("--imputed", imputed)->required();
  eval_cmd->add_option("--types", types)->required();
  eval_cmd->add_option("--mask", mask, "Cells with 0 are scored")->required();
  eval_cmd->add_option("--out", out_path, "Metrics JSON")->required();

  // benchmark
  auto* bench_cmd = app.add_subcommand("benchmark", "Run the missing-rate sweep");
  bool synthetic = false;
  std::size_t synthetic_rows = 1000;
  std::vector<double> fractions{0.1, 0.2, 0.3, 0.4, 0.5};
  std::size_t repeats = 10;
  std::vector<std::string> methods{"hivae_map", "hivae_sample", "mean_mode"};
  TrainFlags bflags;
  auto* bench_data = bench_cmd->add_option("--data", data);
  auto* bench_synth = bench_cmd->add_flag("--synthetic", synthetic, "Use the built-in synthetic table");
  bench_data->excludes(bench_synth);
  bench_cmd->add_option("--types", types)->needs(bench_data);
  bench_cmd->add_option("--mask", mask)->needs(bench_data);
  bench_cmd->add_option("--rows", synthetic_rows, "Rows of the synthetic table")
      ->needs(bench_synth)
      ->capture_default_str();
  bench_cmd->add_option("--fractions", fractions)->delimiter(',')->capture_default_str();
  bench_cmd->add_option("--repeats", repeats)->capture_default_str();
  bench_cmd->add_option("--methods", methods)->delimiter(',')->capture_default_str();
  bench_cmd->add_option("--out", out_path, "Metrics JSON; the table goes to <out>.txt")->required();
  add_train_flags(bench_cmd, bflags);

  // predict
  auto* predict_cmd = app.add_subcommand("predict", "Predict hidden labels of a categorical column");
  std::string target;
  double train_fraction = 0.5;
  TrainFlags pflags;
  predict_cmd->add_option("--data", data)->required();
  predict_cmd->add_option("--types", types)->required();
  predict_cmd->add_option("--mask", mask);
  predict_cmd->add_option("--target", target, "Column name or index")->required();
  predict_cmd->add_option("--train-fraction", train_fraction)->capture_default_str();
  predict_cmd->add_option("--out", out_path, "Predictions CSV")->required();
  add_train_flags(predict_cmd, pflags);

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, e2;
    const int code = app.exit(e, o, e2);
    out << o.str();
    err << e2.str();
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (train_cmd->parsed()) {
      const TrainConfig config = tflags.resolve();
      config.validate();
      auto ds = load_dataset(data, types, opt_path(mask));
      std::ofstream log(out_path + ".log", std::ios::binary);
      if (!log) throw DataError("cannot write '" + out_path + ".log'");
      log << "epoch,tau,elbo\n";
      auto model = train(ds.table, ds.mask, config, [&](const EpochRecord& r) {
        log << r.epoch << ',' << r.tau << ',' << r.elbo << '\n';
      });
      save_model(model, out_path);
      out << "trained " << config.epochs << " epochs, final ELBO per row "
          << model.log.back().elbo << "\n";
    } else if (impute_cmd->parsed()) {
      auto ds = load_dataset(data, types, opt_path(mask));
      auto model = load_model(model_path, ds.table.schema());
      ImputationResult result;
      if (method == "map") {
        result = impute_map(model, ds.table, ds.mask);
      } else {
        std::uint64_t seed;
        if (impute_seed) {
          seed = *impute_seed;
        } else {
          std::random_device rd;
          seed = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
          err << "sampling seed: " << seed << "\n";
        }
        Rng rng(seed);
        result = impute_sample(model, ds.table, ds.mask, rng);
      }
      write_table(out_path, result.completed);
      write_fills(out_path + ".fills.csv", ds.table.schema(), result.fills);
      out << "filled " << result.fills.size() << " cells\n";
    } else if (eval_cmd->parsed()) {
      const Schema schema = load_types(types);
      auto truth_ds = load_data(truth, schema);
      auto imputed_ds = load_data(imputed, schema);
      const auto eval_mask = load_mask(mask, truth_ds.table.rows(), schema.size());
      auto report = score_imputation(truth_ds.table, imputed_ds.table, eval_mask, &truth_ds.mask);
      report.method = "evaluate";
      for (const auto& w : report.warnings) err << "warning: " << w << "\n";
      write_text(out_path, reports_to_json({report}));
      for (const auto& c : report.columns)
        out << c.name << ' ' << c.metric << ' ' << c.error << " (" << c.cells << " cells)\n";
      out << "AvgErr " << report.avg_err << "\n";
    } else if (bench_cmd->parsed()) {
      if (!synthetic && data.empty()) throw ConfigError("benchmark needs --data or --synthetic");
      if (!synthetic && types.empty()) throw ConfigError("--data requires --types");
      BenchmarkConfig bc;
      bc.train = bflags.resolve();
      bc.train.validate();
      bc.fractions = fractions;
      bc.repeats = repeats;
      bc.seed = bflags.config.seed;
      bc.methods.clear();
      for (const auto& m : methods) {
        auto parsed = parse_method(m);
        if (!parsed) throw ConfigError("unknown method '" + m + "'");
        bc.methods.push_back(*parsed);
      }
      for (double f : fractions)
        if (!(f >= 0.0 && f < 1.0)) throw ConfigError("fractions must lie in [0, 1)");
      Dataset ds = synthetic ? generate_synthetic(synthetic_rows, bc.seed)
                             : load_dataset(data, types, opt_path(mask));
      auto reports = run_benchmark(ds.table, ds.mask, bc);
      const auto table = format_reports(reports);
      write_text(out_path, reports_to_json(reports));
      write_text(out_path + ".txt", table);
      out << table;
    } else if (predict_cmd->parsed()) {
      const TrainConfig config = pflags.resolve();
      config.validate();
      auto ds = load_dataset(data, types, opt_path(mask));
      const std::size_t col = resolve_column(ds.table.schema(), target);
      Rng rng(derive_seed(config.seed, 3));
      auto result = predict_target(ds.table, ds.mask, col, train_fraction, config, rng);
      std::ofstream pred(out_path, std::ios::binary);
      if (!pred) throw DataError("cannot write '" + out_path + "'");
      pred << "row,truth,prediction\n";
      for (std::size_t i = 0; i < result.held_out_rows.size(); ++i)
        pred << result.held_out_rows[i] << ',' << result.truth[i] << ',' << result.predictions[i]
             << '\n';
      out << "accuracy error " << result.accuracy_error << " (majority baseline "
          << result.baseline_error << ", " << result.held_out_rows.size() << " held-out rows)\n";
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitOk;
}

}  // namespace hivae
