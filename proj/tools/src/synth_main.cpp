#include <CLI11.hpp>
#include <iostream>

#include "pilot/corpus.hpp"
#include "pilot/error.hpp"
#include "pilot/synthetic.hpp"

// Writes a labeled synthetic C-function corpus in the JSONL interchange format.
int main(int argc, char** argv) {
  CLI::App app{"Synthetic vulnerability corpus generator"};
  pilot::synthetic::CodeCorpusSpec spec;
  std::string out;
  app.add_option("-o,--out", out, "Output JSONL path")->required();
  app.add_option("-n,--samples", spec.n_samples, "Number of functions")->capture_default_str();
  app.add_option("--positive-fraction", spec.positive_fraction, "Share of vulnerable functions")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  app.add_option("--cross-rate", spec.cross_rate, "Chance a call site uses the other class's vocabulary")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  app.add_option("--min-statements", spec.min_statements)->capture_default_str();
  app.add_option("--max-statements", spec.max_statements)->capture_default_str();
  app.add_option("--seed", spec.seed)->capture_default_str();
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }
  if (spec.min_statements > spec.max_statements) {
    std::cerr << "--min-statements must not exceed --max-statements\n";
    return 2;
  }
  try {
    const auto samples = pilot::synthetic::code_corpus(spec);
    pilot::corpus::write_corpus(out, samples);
    std::cout << "wrote " << samples.size() << " samples to " << out << '\n';
  } catch (const pilot::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
