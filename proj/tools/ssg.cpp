// Command-line front end: ssg <gen|stats|train|eval|predict|ablate-stats> [options]

#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "ssg/error.hpp"
#include "ssg/pipeline.hpp"

namespace {

struct Command {
  const char* name;
  const char* help;
  std::string (*run)(const ssg::RunConfig&);
  std::vector<const char*> positionals;  // configuration keys filled positionally
};

void single_line(std::string& s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Command> commands = {
      {"gen", "generate a synthetic corpus (train/, val/, test/, model.json) under --out", ssg::cmd_gen, {}},
      {"stats", "count co-occurrence statistics over a corpus", ssg::cmd_stats, {"corpus"}},
      {"train", "train a model and write a checkpoint to --out", ssg::cmd_train, {"corpus", "val-corpus"}},
      {"eval", "evaluate a checkpoint on a corpus", ssg::cmd_eval, {"corpus"}},
      {"predict", "predict the scene graph of one scene", ssg::cmd_predict, {"scene"}},
      {"ablate-stats", "drop the most frequent triplets from a statistics file", ssg::cmd_ablate_stats, {"stats"}},
  };

  CLI::App app{"3D scene-graph estimation"};
  app.require_subcommand(1);
  std::string config_path;
  std::map<std::string, std::map<std::string, std::string>> values;
  for (const auto& cmd : commands) {
    auto* sub = app.add_subcommand(cmd.name, cmd.help);
    sub->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    sub->add_option("--config", config_path, "key = value configuration file");
    auto& slot = values[cmd.name];
    for (const char* key : cmd.positionals)
      sub->add_option(std::string(key) + ",--" + key, slot[key], std::string("same as --") + key);
    for (const auto& key : ssg::config_keys()) {
      if (slot.count(key.name)) continue;
      if (key.boolean)
        sub->add_flag("--" + key.name, slot[key.name], key.help);
      else
        sub->add_option("--" + key.name, slot[key.name], key.help);
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    single_line(msg);
    std::cerr << "usage_error: " << msg << "\n";
    return 2;
  }

  for (const auto& cmd : commands) {
    auto* sub = app.get_subcommand(cmd.name);
    if (!sub->parsed()) continue;
    try {
      ssg::RunConfig cfg;
      if (!config_path.empty()) cfg = ssg::load_run_config(config_path);
      for (const auto& key : ssg::config_keys()) {
        const auto* opt = sub->get_option_no_throw("--" + key.name);
        if (opt && opt->count() > 0) ssg::apply_setting(cfg, key.name, values[cmd.name][key.name]);
      }
      const std::string text = cmd.run(cfg);
      std::cout << text << (text.ends_with('\n') ? "" : "\n");
      return 0;
    } catch (const ssg::Error& e) {
      std::string msg = e.what();
      single_line(msg);
      std::cerr << e.kind() << ": " << msg << "\n";
      return 1;
    } catch (const std::exception& e) {
      std::string msg = e.what();
      single_line(msg);
      std::cerr << "internal_error: " << msg << "\n";
      return 3;
    }
  }
  return 0;
}
