#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace lamarl::agents {

enum class CommStrategy { LearnedLanguage, Oracle, None, RawObservations, ContinuousEC };
enum class Grounding { None, AutoEncoder, LangGround };

/// One row of the ablation table.
struct VariantSpec {
  std::string name;
  bool language_learning = false;
  CommStrategy comm = CommStrategy::None;
  Grounding grounding = Grounding::None;

  /// Context dimension C of the communication policy.
  int context_dim() const;
  /// Messages are token sequences (learned or oracle).
  bool uses_tokens() const { return comm == CommStrategy::LearnedLanguage || comm == CommStrategy::Oracle; }
  bool communicates() const { return comm != CommStrategy::None; }
  bool speaks_with_decoder() const { return comm == CommStrategy::LearnedLanguage; }
  bool operator==(const VariantSpec&) const = default;
};

/// The nine supported variants, in table order:
/// "LAMARL", "EC", "EC-AutoEncoder", "EC-LangGround", "No Comm",
/// "Lang+Oracle", "Lang+No Comm", "No Lang+Oracle", "Observations".
const std::vector<VariantSpec>& all_variants();
/// Throws std::invalid_argument listing the valid names.
const VariantSpec& variant_from_name(std::string_view name);

std::string_view to_string(CommStrategy c);
std::string_view to_string(Grounding g);

}  // namespace lamarl::agents
