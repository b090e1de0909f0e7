// Command-line front end: train / evaluate / predict / dump-attention /
// gen-toy, all driven by flat key=value configs with --set overrides.
// Exit codes: 0 success, 1 usage or config error, 2 data error, 3 numeric
// failure during training or inference.
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "synformer/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"syntactically supervised joint intent and slot tagger"};
  app.require_subcommand(1);

  std::string config_path, ckpt_path, data_dir, input_path, output_path, out_dir;
  std::vector<std::string> overrides;
  int train_count = 32, valid_count = 8, test_count = 8;
  uint64_t seed = 7;

  auto* train = app.add_subcommand("train", "train a model and keep the best checkpoint");
  train->add_option("--config", config_path, "key=value config file");
  train->add_option("--set", overrides, "override a config key (key=value), repeatable");

  auto* evaluate = app.add_subcommand("evaluate", "score a checkpoint on an annotated split");
  evaluate->add_option("--checkpoint", ckpt_path, "model container")->required();
  evaluate->add_option("--data", data_dir, "split directory (seq.in/seq.out/label)")->required();

  auto* predict = app.add_subcommand("predict", "tag raw utterances with a checkpoint");
  predict->add_option("--checkpoint", ckpt_path, "model container")->required();
  predict->add_option("--input", input_path, "one space-separated utterance per line")
      ->required();
  predict->add_option("--output", output_path, "output file ('-' = stdout)");

  auto* dump = app.add_subcommand("dump-attention", "export attention matrices as JSON lines");
  dump->add_option("--checkpoint", ckpt_path, "model container")->required();
  dump->add_option("--input", input_path, "one space-separated utterance per line")->required();
  dump->add_option("--out", out_dir, "output file")->required();

  auto* gen = app.add_subcommand("gen-toy", "write the deterministic toy corpus");
  gen->add_option("--out", out_dir, "corpus root directory")->required();
  gen->add_option("--train", train_count, "training utterances");
  gen->add_option("--valid", valid_count, "validation utterances");
  gen->add_option("--test", test_count, "test utterances");
  gen->add_option("--seed", seed, "generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (train->parsed()) return synformer::cmd_train(config_path, overrides);
    if (evaluate->parsed()) return synformer::cmd_evaluate(ckpt_path, data_dir);
    if (predict->parsed()) return synformer::cmd_predict(ckpt_path, input_path, output_path);
    if (dump->parsed()) return synformer::cmd_dump_attention(ckpt_path, input_path, out_dir);
    if (gen->parsed())
      return synformer::cmd_gen_toy(out_dir, train_count, valid_count, test_count, seed);
  } catch (const synformer::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const synformer::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const synformer::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
