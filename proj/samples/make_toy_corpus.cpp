// Writes the synthetic two-part toy corpus used for the end-to-end run.
//
//   make_toy_corpus <dir> [seed] [scores] [measures]

#include <cstdlib>
#include <iostream>
#include <string>

#include "a2s/pipeline/toy.hpp"

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: make_toy_corpus <dir> [seed] [scores] [measures]\n";
    return 1;
  }
  a2s::pipeline::ToyCorpusOptions opts;
  const std::uint64_t seed = argc > 2 ? std::stoull(argv[2]) : 7;
  if (argc > 3) opts.scores = std::stoi(argv[3]);
  if (argc > 4) opts.measures = std::stoi(argv[4]);
  try {
    a2s::pipeline::write_toy_corpus(argv[1], seed, opts);
  } catch (const a2s::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  std::cout << "wrote " << opts.scores << " scores to " << argv[1] << '\n';
  return 0;
}
