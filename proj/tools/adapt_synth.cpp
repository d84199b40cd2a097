#include <CLI11.hpp>
#include <iostream>

#include "adapt/errors.hpp"
#include "adapt/synthetic.hpp"

int main(int argc, char** argv) {
  adapt::SyntheticSpec spec;
  std::string out;
  CLI::App app{"adapt_synth: write the two-class sine/sawtooth corpus with a manifest"};
  app.add_option("--out", out, "output directory")->required();
  app.add_option("--datasets", spec.datasets, "number of datasets")->capture_default_str();
  app.add_option("--train", spec.train_per_dataset, "train samples per dataset")->capture_default_str();
  app.add_option("--test", spec.test_per_dataset, "test samples per dataset")->capture_default_str();
  app.add_option("--noise-sigma", spec.noise_sigma, "additive noise sd")->capture_default_str();
  app.add_option("--seed", spec.seed, "generator seed")->capture_default_str();
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }
  try {
    std::cout << adapt::write_synthetic_corpus(out, spec) << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
