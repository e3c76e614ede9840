#include "lamarl/agents/variant.hpp"

#include <stdexcept>

namespace lamarl::agents {

int VariantSpec::context_dim() const {
  if (comm == CommStrategy::ContinuousEC) return grounding == Grounding::LangGround ? 4 : 2;
  return 16;
}

const std::vector<VariantSpec>& all_variants() {
  using C = CommStrategy;
  using G = Grounding;
  static const std::vector<VariantSpec> v{
      {"LAMARL", true, C::LearnedLanguage, G::None},
      {"EC", false, C::ContinuousEC, G::None},
      {"EC-AutoEncoder", false, C::ContinuousEC, G::AutoEncoder},
      {"EC-LangGround", false, C::ContinuousEC, G::LangGround},
      {"No Comm", false, C::None, G::None},
      {"Lang+Oracle", true, C::Oracle, G::None},
      {"Lang+No Comm", true, C::None, G::None},
      {"No Lang+Oracle", false, C::Oracle, G::None},
      {"Observations", false, C::RawObservations, G::None},
  };
  return v;
}

const VariantSpec& variant_from_name(std::string_view name) {
  for (const auto& v : all_variants())
    if (v.name == name) return v;
  std::string valid;
  for (const auto& v : all_variants()) valid += (valid.empty() ? "" : ", ") + ("'" + v.name + "'");
  throw std::invalid_argument("unknown variant '" + std::string(name) + "' (expected one of " + valid + ")");
}

std::string_view to_string(CommStrategy c) {
  switch (c) {
    case CommStrategy::LearnedLanguage: return "LearnedLanguage";
    case CommStrategy::Oracle: return "Oracle";
    case CommStrategy::None: return "None";
    case CommStrategy::RawObservations: return "RawObservations";
    case CommStrategy::ContinuousEC: return "ContinuousEC";
  }
  return "?";
}

std::string_view to_string(Grounding g) {
  switch (g) {
    case Grounding::None: return "None";
    case Grounding::AutoEncoder: return "AutoEncoder";
    case Grounding::LangGround: return "LangGround";
  }
  return "?";
}

}  // namespace lamarl::agents
