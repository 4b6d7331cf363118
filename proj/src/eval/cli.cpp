#include "saufno/eval/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <ostream>

#include <CLI11.hpp>

#include "saufno/error.hpp"
#include "saufno/eval/benchmark.hpp"
#include "saufno/eval/heatmap.hpp"
#include "saufno/eval/metrics.hpp"
#include "saufno/thermal/dataset.hpp"
#include "saufno/train/training.hpp"

namespace saufno::eval {

namespace {

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("FileNotFound", "cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error("InvalidConfig", path + ": " + e.what());
  }
}

thermal::ChipStack resolve_stack(const std::string& chip, const std::string& stack_file, int res) {
  if (stack_file.empty()) return thermal::build_stack(chip, res);
  auto s = thermal::load_stack_file(stack_file);
  if (res > 0) s.H = s.W = res;
  s.validate();
  return s;
}

// THRM datasets are used as-is (temperatures ignored); anything else is read
// as a JSON power map {device_layers, H, W, q: [W/m^3, layer-major], t_a?}.
thermal::Dataset load_power(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("FileNotFound", "cannot open " + path);
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() == 4 && std::memcmp(magic, "THRM", 4) == 0) return thermal::read_dataset(path);
  const auto j = read_json(path);
  thermal::Dataset ds;
  try {
    ds.header.chip_id = j.value("chip_id", std::string("custom"));
    ds.header.device_layers = j.at("device_layers").get<int>();
    ds.header.H = j.at("H").get<int>();
    ds.header.W = j.at("W").get<int>();
    ds.header.t_a = j.value("t_a", ds.header.t_a);
    ds.header.count = 1;
    for (double q : j.at("q")) ds.power.push_back(static_cast<float>(q));
  } catch (const nlohmann::json::exception& e) {
    throw Error("InvalidDataset", path + ": " + e.what());
  }
  if (ds.power.size() != ds.sample_size()) throw Error("InvalidDataset", path + ": q has the wrong length");
  ds.temperature.assign(ds.power.size(), 0.0f);
  return ds;
}

// Run configs hold an optional "model" and an optional "train" object.
nlohmann::json read_run_config(const std::string& path) {
  auto j = read_json(path);
  if (!j.is_object()) throw Error("InvalidConfig", path + ": expected a JSON object");
  for (const auto& [key, _] : j.items())
    if (key != "model" && key != "train") throw Error("InvalidConfig", path + ": unknown key '" + key + "'");
  return j;
}

void require_layers(const nn::ModelConfig& c, const thermal::Dataset& ds) {
  if (c.in_channels != ds.header.device_layers)
    throw Error("IncompatibleParameters", "model expects " + std::to_string(c.in_channels) +
                                              " device layers, data has " + std::to_string(ds.header.device_layers));
}

std::unique_ptr<train::TrainHooks> progress(std::ostream& out, bool quiet) {
  auto h = std::make_unique<train::TrainHooks>();
  if (!quiet) h->log = &out;
  return h;
}

// Leading records train, the rest (per the header split) are held out.
std::pair<thermal::Dataset, thermal::Dataset> split(const thermal::Dataset& ds) {
  const auto n_train = std::max<std::int64_t>(1, ds.train_count());
  return {ds.slice(0, n_train), ds.slice(n_train, ds.header.count)};
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Thermal oracle and neural-operator surrogate for stacked chips", "saufno"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  struct {
    std::string chip = "chip1", stack, data, config, out, ckpt, report, power, heatmap, pred, test_data;
    int n = 0, res = 16, threads = 1, epochs = -1, heatmap_scale = 8;
    std::uint64_t seed = 0;
    double p_min = thermal::kDefaultPMin, p_max = thermal::kDefaultPMax;
    bool quiet = false, model_first = false;
  } o;

  auto* gen = app.add_subcommand("gen-data", "Sample power maps and solve them with the oracle");
  gen->add_option("--chip", o.chip, "Preset stack: chip1, chip2 or chip3");
  gen->add_option("--stack", o.stack, "Stack geometry JSON (overrides --chip)")->check(CLI::ExistingFile);
  gen->add_option("--n", o.n, "Number of samples")->required();
  gen->add_option("--res", o.res, "Die grid resolution (square)");
  gen->add_option("--seed", o.seed, "Dataset seed");
  gen->add_option("--threads", o.threads, "Worker threads (output does not depend on it)");
  gen->add_option("--pmin", o.p_min, "Minimum total power (W)");
  gen->add_option("--pmax", o.p_max, "Maximum total power (W)");
  gen->add_option("--out", o.out, "Output THRM file")->required();

  auto* tr = app.add_subcommand("train", "Train a model from scratch");
  tr->add_option("--data", o.data, "THRM training data (trailing split used for test loss)")->required();
  tr->add_option("--test-data", o.test_data, "Separate THRM test data");
  tr->add_option("--config", o.config, "JSON with optional \"model\" and \"train\" objects")->required();
  tr->add_option("--epochs", o.epochs, "Override the configured epoch count");
  tr->add_option("--out", o.out, "Output checkpoint")->required();
  tr->add_flag("--quiet", o.quiet, "No per-epoch log");

  auto* ft = app.add_subcommand("finetune", "Fine-tune a checkpoint on high-resolution data");
  ft->add_option("--ckpt", o.ckpt, "Pretrained checkpoint")->required();
  ft->add_option("--data", o.data, "THRM fine-tuning data (trailing split used for test loss)")->required();
  ft->add_option("--test-data", o.test_data, "Separate THRM test data");
  ft->add_option("--config", o.config, "JSON with an optional \"train\" object");
  ft->add_option("--epochs", o.epochs, "Override the configured epoch count");
  ft->add_option("--out", o.out, "Output checkpoint")->required();
  ft->add_flag("--quiet", o.quiet, "No per-epoch log");

  auto* ev = app.add_subcommand("evaluate", "Metrics of a model (or stored predictions) against oracle data");
  auto* ev_ckpt = ev->add_option("--ckpt", o.ckpt, "Checkpoint to evaluate");
  auto* ev_pred = ev->add_option("--pred", o.pred, "THRM file whose temperatures are predictions");
  ev_ckpt->excludes(ev_pred);
  ev->add_option("--data", o.data, "THRM ground truth")->required();
  ev->add_option("--report", o.report, "Report JSON path");

  auto* pr = app.add_subcommand("predict", "Predict temperature fields and render heatmaps");
  pr->add_option("--ckpt", o.ckpt, "Checkpoint")->required();
  pr->add_option("--power", o.power, "THRM dataset or JSON power map")->required();
  pr->add_option("--heatmap", o.heatmap, "Directory for PPM heatmaps");
  pr->add_option("--scale", o.heatmap_scale, "Pixels per cell");
  pr->add_option("--out", o.out, "THRM file receiving the predictions");

  auto* bm = app.add_subcommand("benchmark", "Time oracle solves against model inference");
  bm->add_option("--ckpt", o.ckpt, "Checkpoint")->required();
  bm->add_option("--chip", o.chip, "Preset stack");
  bm->add_option("--stack", o.stack, "Stack geometry JSON (overrides --chip)")->check(CLI::ExistingFile);
  bm->add_option("--res", o.res, "Die grid resolution");
  bm->add_option("--n", o.n, "Timed samples (>= 3)")->required();
  bm->add_option("--seed", o.seed, "Power-map seed");
  bm->add_flag("--model-first", o.model_first, "Time the model before the oracle");
  bm->add_option("--report", o.report, "Report JSON path");

  if (!args.empty() && !args[0].empty() && args[0][0] != '-') {
    const auto subs = app.get_subcommands([](CLI::App*) { return true; });
    if (std::none_of(subs.begin(), subs.end(), [&](CLI::App* s) { return s->get_name() == args[0]; })) {
      err << "usage error: unknown subcommand '" << args[0] << "'\n" << app.help();
      return 2;
    }
  }
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    CLI::App* failing = &app;
    for (auto* sub : app.get_subcommands()) failing = sub;
    err << failing->help();
    return 2;
  }

  try {
    if (gen->parsed()) {
      const auto stack = resolve_stack(o.chip, o.stack, o.res);
      thermal::GenerateOptions g;
      g.seed = o.seed;
      g.threads = o.threads;
      g.p_min = o.p_min;
      g.p_max = o.p_max;
      const auto ds = thermal::generate_dataset(stack, o.n, g);
      thermal::write_dataset(ds, o.out);
      out << "wrote " << ds.header.count << " samples (" << stack.chip_id << ", " << stack.H << "x" << stack.W
          << ") to " << o.out << '\n';
    } else if (tr->parsed()) {
      const auto ds = thermal::read_dataset(o.data);
      const auto cfg_json = read_run_config(o.config);
      nlohmann::json model_json = cfg_json.value("model", nlohmann::json::object());
      if (!model_json.contains("in_channels")) model_json["in_channels"] = ds.header.device_layers;
      if (!model_json.contains("out_channels")) model_json["out_channels"] = ds.header.device_layers;
      const auto mc = nn::config_from_json(model_json);
      auto tc = train::train_config_from_json(cfg_json.value("train", nlohmann::json::object()));
      if (o.epochs >= 0) tc.epochs = o.epochs;
      require_layers(mc, ds);
      auto [train_set, test_set] = split(ds);
      if (!o.test_data.empty()) test_set = thermal::read_dataset(o.test_data);
      const auto hooks = progress(out, o.quiet);
      const auto ck = train::train(mc, tc, train_set, test_set.header.count > 0 ? &test_set : nullptr, *hooks);
      train::save_checkpoint(ck, o.out);
      out << "saved " << o.out << " (" << ck.meta.epoch << " epochs, final train loss "
          << (ck.meta.train_loss.empty() ? 0.0 : ck.meta.train_loss.back()) << ")\n";
    } else if (ft->parsed()) {
      const auto base = train::load_checkpoint(o.ckpt);
      const auto ds = thermal::read_dataset(o.data);
      train::TrainConfig tc = base.meta.train;
      if (!o.config.empty()) {
        const auto j = read_run_config(o.config);
        nlohmann::json merged = train::train_config_to_json(tc);
        merged.update(j.value("train", nlohmann::json::object()));
        tc = train::train_config_from_json(merged);
      }
      if (o.epochs >= 0) tc.epochs = o.epochs;
      require_layers(base.config, ds);
      auto [train_set, test_set] = split(ds);
      if (!o.test_data.empty()) test_set = thermal::read_dataset(o.test_data);
      const auto hooks = progress(out, o.quiet);
      const auto ck = train::finetune(base, tc, train_set, test_set.header.count > 0 ? &test_set : nullptr, *hooks);
      train::save_checkpoint(ck, o.out);
      out << "saved " << o.out << " (fine-tuned " << ck.meta.epoch << " epochs at lr " << ck.meta.train.lr << ")\n";
    } else if (ev->parsed()) {
      if (o.ckpt.empty() && o.pred.empty()) throw Error("MissingArgument", "evaluate needs --ckpt or --pred");
      const auto truth = thermal::read_dataset(o.data);
      std::vector<float> pred;
      double runtime = 0;
      if (!o.ckpt.empty()) {
        const auto ck = train::load_checkpoint(o.ckpt);
        require_layers(ck.config, truth);
        const auto model = ck.model();
        const auto t0 = std::chrono::steady_clock::now();
        pred = train::predict(model, ck.meta.stats, truth);
        runtime = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      } else {
        const auto p = thermal::read_dataset(o.pred);
        if (p.header.count != truth.header.count || p.sample_size() != truth.sample_size())
          throw Error("ShapeMismatch", "predictions and truth differ in shape");
        pred = p.temperature;
      }
      auto report = compute_metrics(pred, truth.temperature, truth.header.count, {truth.header.H, truth.header.W});
      report.runtime_s = runtime;
      if (!o.report.empty()) write_report(report, o.report);
      auto summary = report_to_json(report);
      summary.erase("per_sample");
      out << summary.dump(2) << '\n';
    } else if (pr->parsed()) {
      const auto ck = train::load_checkpoint(o.ckpt);
      auto ds = load_power(o.power);
      require_layers(ck.config, ds);
      const auto pred = train::predict(ck.model(), ck.meta.stats, ds);
      if (!o.heatmap.empty()) {
        std::error_code ec;
        std::filesystem::create_directories(o.heatmap, ec);
        if (ec) throw Error("UnwritablePath", "cannot create " + o.heatmap);
        const std::size_t plane = static_cast<std::size_t>(ds.header.H) * ds.header.W;
        for (std::int64_t s = 0; s < ds.header.count; ++s)
          for (int l = 0; l < ds.header.device_layers; ++l) {
            const auto path = (std::filesystem::path(o.heatmap) /
                               ("sample" + std::to_string(s) + "_layer" + std::to_string(l) + ".ppm"))
                                  .string();
            render_heatmap(std::span(pred).subspan((s * ds.header.device_layers + l) * plane, plane), ds.header.H,
                           ds.header.W, path, o.heatmap_scale);
          }
      }
      if (!o.out.empty()) {
        ds.temperature = pred;
        thermal::write_dataset(ds, o.out);
      }
      float hottest = *std::max_element(pred.begin(), pred.end());
      out << "predicted " << ds.header.count << " sample(s); hottest cell " << hottest << " K\n";
    } else if (bm->parsed()) {
      const auto ck = train::load_checkpoint(o.ckpt);
      const auto stack = resolve_stack(o.chip, o.stack, o.res);
      BenchmarkOptions b;
      b.seed = o.seed;
      b.model_first = o.model_first;
      const auto r = benchmark(ck.model(), ck.meta.stats, stack, o.n, b);
      const auto j = benchmark_to_json(r);
      if (!o.report.empty()) {
        std::ofstream f(o.report);
        if (!f) throw Error("UnwritablePath", "cannot write " + o.report);
        f << j.dump(2) << '\n';
      }
      out << j.dump(2) << '\n';
    }
  } catch (const Error& e) {
    err << "error: " << e.code() << ": " << e.what() << '\n';
    return 1;
  } catch (const ShapeError& e) {
    err << "error: ShapeMismatch: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: Internal: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args, out, err);
}

}  // namespace saufno::eval
