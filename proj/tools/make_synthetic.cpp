// Writes the synthetic stand-in datasets:
//   <dir>/conala_gold_synthetic.json    CoNaLa-format gold array
//   <dir>/conala_mined_synthetic.jsonl  mined pairs with prob
//   <dir>/nl2lf_synthetic.jsonl         labeling-function pairs
#include <iostream>

#include <CLI11.hpp>

#include "nl2lf/synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Generate synthetic gold, mined and NL2LF datasets"};
  std::string dir = "data";
  std::size_t gold = 2379, noisy = 20000, nl2lf = 193;
  std::uint64_t seed = 2022;
  double corrupt = 0.2;
  app.add_option("--dir", dir, "output directory");
  app.add_option("--gold", gold, "gold pairs");
  app.add_option("--noisy", noisy, "mined pairs");
  app.add_option("--nl2lf", nl2lf, "labeling-function pairs");
  app.add_option("--corrupt", corrupt, "fraction of mined pairs with a damaged snippet");
  app.add_option("--seed", seed, "generator seed");
  CLI11_PARSE(app, argc, argv);

  try {
    std::filesystem::create_directories(dir);
    const auto g = nl2lf::synthetic::make_gold(gold, seed);
    nl2lf::synthetic::write_gold(g, std::filesystem::path(dir) / "conala_gold_synthetic.json");
    const auto n = nl2lf::synthetic::make_noisy(noisy, seed + 1, corrupt);
    nl2lf::synthetic::write_noisy(n, std::filesystem::path(dir) / "conala_mined_synthetic.jsonl");
    const auto l = nl2lf::synthetic::make_nl2lf(nl2lf, seed + 2);
    nl2lf::synthetic::write_nl2lf(l, std::filesystem::path(dir) / "nl2lf_synthetic.jsonl");
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
