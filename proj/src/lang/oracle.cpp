#include "lamarl/lang/oracle.hpp"

#include <algorithm>
#include <stdexcept>

namespace lamarl::lang {

int band(int index, int extent) { return std::clamp(index * 3 / extent, 0, 2); }

Zone zone_of(env::Cell cell, int grid_size) {
  static constexpr Zone::Vertical kV[] = {Zone::Vertical::North, Zone::Vertical::Middle, Zone::Vertical::South};
  static constexpr Zone::Horizontal kH[] = {Zone::Horizontal::West, Zone::Horizontal::Middle, Zone::Horizontal::East};
  return {kV[band(cell.row, grid_size)], kH[band(cell.col, grid_size)]};
}

std::vector<TokenId> zone_tokens(const Zone& z, const Vocabulary& vocab) {
  std::vector<TokenId> out;
  if (z.vertical == Zone::Vertical::North) out.push_back(vocab.id("North"));
  if (z.vertical == Zone::Vertical::South) out.push_back(vocab.id("South"));
  if (z.horizontal == Zone::Horizontal::East) out.push_back(vocab.id("East"));
  if (z.horizontal == Zone::Horizontal::West) out.push_back(vocab.id("West"));
  if (out.empty()) out.push_back(vocab.id("Center"));
  return out;
}

Description describe_entities(std::span<const VisibleEntity> entities, int grid_size, const Vocabulary& vocab,
                              int max_length) {
  std::vector<VisibleEntity> sorted(entities.begin(), entities.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const VisibleEntity& a, const VisibleEntity& b) { return a.pos < b.pos; });
  Description d;
  for (const VisibleEntity& e : sorted) {
    std::vector<TokenId> phrase;
    if (e.kind) phrase.push_back(*e.kind);
    if (e.color) phrase.push_back(*e.color);
    const auto zone = zone_tokens(zone_of(e.pos, grid_size), vocab);
    phrase.insert(phrase.end(), zone.begin(), zone.end());
    if (static_cast<int>(d.tokens.size() + phrase.size()) + 1 > max_length) break;
    d.tokens.insert(d.tokens.end(), phrase.begin(), phrase.end());
  }
  d.tokens.push_back(vocab.eos());
  return d;
}

namespace {

TokenId resource_color(int level, const Vocabulary& vocab) {
  switch (level) {
    case 1: return vocab.id("Yellow");
    case 2: return vocab.id("Green");
    case 3: return vocab.id("Purple");
    default: throw std::invalid_argument("resource level must be 1..3");
  }
}

}  // namespace

std::vector<VisibleEntity> visible_entities(const env::GridState& s, int agent, const Vocabulary& vocab) {
  if (agent < 0 || agent >= static_cast<int>(s.agents.size())) throw std::out_of_range("describe: bad agent index");
  const env::Cell me = s.agents[static_cast<std::size_t>(agent)];
  std::vector<VisibleEntity> out;
  switch (s.config.task) {
    case env::Task::PredatorPrey:
      for (const env::Prey& p : s.preys)
        if (!p.captured && env::in_view(me, p.pos)) out.push_back({p.pos, vocab.id("Prey"), std::nullopt});
      break;
    case env::Task::Foraging:
      for (const env::Resource& r : s.resources)
        if (!r.foraged && env::in_view(me, r.pos))
          out.push_back({r.pos, vocab.id("Gem"), resource_color(r.level, vocab)});
      break;
    case env::Task::CoordinatedPlacement:
      if (const env::Landmark* l = s.landmark_at(me))
        out.push_back({me, std::nullopt, vocab.id(env::to_string(l->color))});
      break;
  }
  return out;
}

Description describe(const env::GridState& s, int agent, const Vocabulary& vocab) {
  const auto entities = visible_entities(s, agent, vocab);
  return describe_entities(entities, s.config.width, vocab);
}

}  // namespace lamarl::lang
