// Writes a small synthetic corpus in the train/val/test folder layout.

#include <CLI11.hpp>

#include <iostream>

#include "tss/errors.hpp"
#include "tss/synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Write a synthetic left/right-asymmetric image corpus", "tss_make_toy_corpus"};
  std::filesystem::path out;
  tss::ToyCorpusOptions o;
  app.add_option("--out", out, "Corpus root to create")->required();
  app.add_option("--train-per-class", o.train_per_class, "Training images per class")->capture_default_str();
  app.add_option("--val-per-class", o.val_per_class, "Validation images per class")->capture_default_str();
  app.add_option("--test-per-class", o.test_per_class, "Test images per class")->capture_default_str();
  app.add_option("--side", o.side, "Image side in pixels")->capture_default_str();
  app.add_option("--seed", o.seed, "Generator seed")->capture_default_str();
  CLI11_PARSE(app, argc, argv);
  try {
    tss::write_toy_corpus(out, o);
  } catch (const tss::Error& e) {
    std::cerr << "tss_make_toy_corpus: error: " << e.what() << std::endl;
    return 3;
  }
  std::cout << "wrote " << 2 * (o.train_per_class + o.val_per_class + o.test_per_class)
            << " images under " << out.string() << "\n";
  return 0;
}
