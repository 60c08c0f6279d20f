#include <CLI11.hpp>

#include <iostream>

#include "pilstm/cli.hpp"

namespace {

using namespace pilstm;
using namespace pilstm::cli;

struct Common {
  std::string config;
  std::string preset;
  double alpha_pi = 0.0;
  int n_hidden = 0;
  std::uint64_t seed = 0;
  int epochs = 0;
  long steps = 0;
  std::string out;
  bool force = false;
  bool json_out = false;
};

void add_common(CLI::App* app, Common& c, bool training_flags) {
  app->add_option("--config", c.config, "JSON config or a manifest.json from an earlier run")->check(CLI::ExistingFile);
  app->add_option("--preset", c.preset, "case-i | case-ii | case-iii");
  app->add_option("--seed", c.seed, "Run seed");
  app->add_option("--out", c.out, "Output location (defaults to $PILSTM_OUTPUT_DIR)");
  app->add_flag("--json", c.json_out, "Print a JSON summary on stdout");
  if (training_flags) {
    app->add_option("--alpha-pi", c.alpha_pi, "Physics-loss weight");
    app->add_option("--n-h", c.n_hidden, "Hidden units");
    app->add_option("--epochs", c.epochs, "Maximum epochs");
  }
}

Overrides overrides(CLI::App* app, const Common& c) {
  Overrides o;
  if (app->count("--preset")) o.preset = c.preset;
  if (app->count("--seed")) o.seed = c.seed;
  if (app->get_option_no_throw("--alpha-pi") && app->count("--alpha-pi")) o.alpha_pi = c.alpha_pi;
  if (app->get_option_no_throw("--n-h") && app->count("--n-h")) o.n_hidden = c.n_hidden;
  if (app->get_option_no_throw("--epochs") && app->count("--epochs")) o.max_epochs = c.epochs;
  if (app->get_option_no_throw("--steps") && app->count("--steps")) o.steps = c.steps;
  return o;
}

RunConfig config_for(CLI::App* app, const Common& c) {
  std::optional<fs::path> path;
  if (!c.config.empty()) path = c.config;
  return resolve_config(path, overrides(app, c));
}

fs::path out_dir(const Common& c) { return c.out.empty() ? default_output_dir() : fs::path(c.out); }

void report(const Common& c, const nlohmann::json& summary) {
  if (c.json_out) {
    std::cout << summary.dump(2) << "\n";
  } else {
    std::cerr << summary.at("command").get<std::string>() << ": done\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Physics-informed LSTM for Lorenz-96 forecasting and reconstruction"};
  app.require_subcommand(1);

  Common gen_c, train_c, sweep_c, lyap_c, eval_c;
  std::string role = "train";
  std::string data, test_data, checkpoint, map, manifest;
  std::vector<std::string> checkpoints, labels;
  bool identity = false;

  auto* gen = app.add_subcommand("generate", "Integrate Lorenz-96 and write a trajectory CSV");
  add_common(gen, gen_c, false);
  gen->add_option("--steps", gen_c.steps, "Stored steps after washout (train role)");
  gen->add_option("--role", role, "train | test")->check(CLI::IsMember({"train", "test"}));
  gen->add_flag("--force", gen_c.force, "Overwrite existing output");

  auto* tr = app.add_subcommand("train", "Train one network");
  add_common(tr, train_c, true);
  tr->add_option("--data", data, "Training trajectory CSV")->required()->check(CLI::ExistingFile);
  tr->add_flag("--force", train_c.force, "Overwrite existing output");

  auto* sw = app.add_subcommand("sweep", "Grid search over n_hidden and alpha_pi (resumable)");
  add_common(sw, sweep_c, true);
  sw->add_option("--data", data, "Training trajectory CSV")->required()->check(CLI::ExistingFile);

  auto* ly = app.add_subcommand("lyapunov", "Lyapunov spectrum of the ODE, a checkpoint or a test map");
  add_common(ly, lyap_c, false);
  ly->add_option("--checkpoint", checkpoint, "Network checkpoint")->check(CLI::ExistingFile);
  ly->add_option("--map", map, "Linear test map, e.g. diag:2,0.5");
  ly->add_flag("--force", lyap_c.force, "Overwrite existing output");

  auto* ev = app.add_subcommand("evaluate", "Closed-loop reconstruction report");
  add_common(ev, eval_c, false);
  ev->add_option("--test-data", test_data, "Test trajectory CSV")->required()->check(CLI::ExistingFile);
  ev->add_option("--checkpoint", checkpoints, "Checkpoint (repeatable)")->check(CLI::ExistingFile);
  ev->add_option("--label", labels, "Label per run (repeatable)");
  ev->add_flag("--identity", identity, "Include the identity harness");
  ev->add_flag("--force", eval_c.force, "Overwrite existing output");

  Common rep_c;
  auto* rp = app.add_subcommand("replay", "Re-run a manifest into a new output directory");
  rp->add_option("manifest", manifest, "manifest.json")->required()->check(CLI::ExistingFile);
  rp->add_option("--out", rep_c.out, "Output directory")->required();
  rp->add_flag("--json", rep_c.json_out, "Print a JSON summary on stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*gen) {
      Overrides o = overrides(gen, gen_c);
      o.steps.reset();
      RunConfig cfg = resolve_config(gen_c.config.empty() ? std::nullopt : std::optional<fs::path>(gen_c.config), o);
      if (gen->count("--steps")) (role == "train" ? cfg.data.n_steps : cfg.data.test_steps) = gen_c.steps;
      cfg.validate();
      fs::path out = gen_c.out.empty() ? default_output_dir() / (role + ".csv") : fs::path(gen_c.out);
      report(gen_c, cmd_generate(cfg, {out, role, gen_c.force}));
    } else if (*tr) {
      const RunConfig cfg = config_for(tr, train_c);
      report(train_c, cmd_train(cfg, {data, out_dir(train_c), train_c.force}));
    } else if (*sw) {
      const RunConfig cfg = config_for(sw, sweep_c);
      report(sweep_c, cmd_sweep(cfg, {data, out_dir(sweep_c)}));
    } else if (*ly) {
      const RunConfig cfg = config_for(ly, lyap_c);
      LyapunovArgs a{out_dir(lyap_c), std::nullopt, std::nullopt, lyap_c.force};
      if (!checkpoint.empty()) a.checkpoint = checkpoint;
      if (!map.empty()) a.map = map;
      report(lyap_c, cmd_lyapunov(cfg, a));
    } else if (*ev) {
      const RunConfig cfg = config_for(ev, eval_c);
      EvaluateArgs a;
      a.test_data = test_data;
      a.out = out_dir(eval_c);
      for (const auto& c : checkpoints) a.checkpoints.emplace_back(c);
      a.labels = labels;
      a.identity = identity;
      a.force = eval_c.force;
      report(eval_c, cmd_evaluate(cfg, a));
    } else if (*rp) {
      report(rep_c, cmd_replay(manifest, rep_c.out));
    }
  } catch (const pilstm::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
