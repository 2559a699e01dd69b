#pragma once

#include <string>

namespace salsum {

// The ten ways of wiring the seq-to-seq model together with saliency
// scoring. FineTune is the bare model; the rest either reuse the encoder
// as a saliency scorer (shared head), run a separate extractor over the
// source before encoding, or both.
enum class Strategy {
  FineTune,
  MT,      // joint summary + saliency loss on the shared encoder
  SE,      // encoder states scaled by saliency scores
  SE_MT,   // SE structure, joint loss
  SA,      // decoder context-attention rows reweighted by saliency scores
  SA_MT,   // SA structure, joint loss
  SEG,     // extractor picks top-P sentences, seq-to-seq summarizes them
  CIT,     // extractor picks top-K tokens, prepended to the source
  CIT_SE,  // CIT input plus SE weighting from an unsupervised shared head
  CIT_SA,  // CIT input plus SA weighting from an unsupervised shared head
};

struct StrategyTraits {
  const char* name;       // CLI spelling
  bool shared_head;       // seq-to-seq model carries its own scoring head
  bool uses_extractor;    // separate extractor model, trained first
  bool se_weighting;      // scale encoder states by scores
  bool sa_weighting;      // reweight context-attention rows by scores
  bool abs_includes_sal;  // L_abs = L_sum + L_sal (otherwise L_sum alone)
  bool shared_head_supervised;  // shared head receives the saliency loss
};

const StrategyTraits& strategy_traits(Strategy s);
Strategy parse_strategy(const std::string& name);
const char* strategy_name(Strategy s);

// All strategies in declaration order, for iteration in tests and tools.
inline constexpr Strategy kAllStrategies[] = {
    Strategy::FineTune, Strategy::MT,  Strategy::SE,     Strategy::SE_MT,
    Strategy::SA,       Strategy::SA_MT, Strategy::SEG,  Strategy::CIT,
    Strategy::CIT_SE,   Strategy::CIT_SA,
};

}  // namespace salsum
