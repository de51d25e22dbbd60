// pslr - few-shot prototypical sign recognition over skeleton sequences.

#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pslr/errors.hpp"
#include "pslr/runner.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::int64_t seed = -1;
  std::string resume;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool with_resume = false) {
  cmd->add_option("--config", args.config_path, "run configuration file")->required();
  cmd->add_option("--override", args.overrides,
                  "override a config value (section.key=value, repeatable)");
  cmd->add_option("--seed", args.seed, "override the run seed");
  if (with_resume) {
    cmd->add_option("--resume", args.resume, "resume from a checkpoint");
  }
}

pslr::RunConfig make_config(const CommonArgs& args) {
  std::vector<std::string> overrides = args.overrides;
  if (args.seed >= 0) overrides.push_back("run.seed=" + std::to_string(args.seed));
  return pslr::RunConfig::load(args.config_path, overrides);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Few-shot prototypical recognition of isolated signs from skeleton keypoints"};
  app.require_subcommand(1);

  CommonArgs train_proto_args, train_baseline_args, eval_args, eval_cross_args, confusions_args,
      project_args, gen_args;

  CLI::App* train_proto = app.add_subcommand("train-proto", "episodic prototypical training");
  add_common(train_proto, train_proto_args, /*with_resume=*/true);
  CLI::App* train_baseline =
      app.add_subcommand("train-baseline", "standard-classifier baseline training");
  add_common(train_baseline, train_baseline_args);
  CLI::App* eval = app.add_subcommand("eval", "global-prototype (or baseline) evaluation");
  add_common(eval, eval_args);
  CLI::App* eval_cross = app.add_subcommand("eval-cross", "zero-shot cross-dataset evaluation");
  add_common(eval_cross, eval_cross_args);
  CLI::App* confusions = app.add_subcommand("confusions", "extract most-confused class pairs");
  add_common(confusions, confusions_args);
  CLI::App* project = app.add_subcommand("project", "PCA projection of embeddings");
  add_common(project, project_args);
  CLI::App* gen = app.add_subcommand("gen-synthetic", "generate a synthetic skeleton dataset");
  add_common(gen, gen_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (train_proto->parsed()) {
      return pslr::cmd_train_proto(make_config(train_proto_args), train_proto_args.resume);
    }
    if (train_baseline->parsed()) {
      return pslr::cmd_train_baseline(make_config(train_baseline_args));
    }
    if (eval->parsed()) return pslr::cmd_eval(make_config(eval_args));
    if (eval_cross->parsed()) return pslr::cmd_eval_cross(make_config(eval_cross_args));
    if (confusions->parsed()) return pslr::cmd_confusions(make_config(confusions_args));
    if (project->parsed()) return pslr::cmd_project(make_config(project_args));
    if (gen->parsed()) return pslr::cmd_gen_synthetic(make_config(gen_args));
  } catch (const pslr::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const pslr::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const pslr::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
