#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>

namespace ckprobe {

// The ConceptNet relations covered by the probing test, ordered by their
// sample count in the English dump (largest first).
enum class Relation : std::uint8_t {
  RelatedTo,
  HasContext,
  IsA,
  DerivedFrom,
  Synonym,
  FormOf,
  EtymologicallyRelatedTo,
  SimilarTo,
  AtLocation,
  MannerOf,
  PartOf,
  Antonym,
  HasProperty,
  UsedFor,
  DistinctFrom,
  HasPrerequisite,
  HasSubevent,
  Causes,
  HasA,
  InstanceOf,
  CapableOf,
  ReceivesAction,
  MotivatedByGoal,
  CausesDesire,
  MadeOf,
  HasLastSubevent,
  Entails,
  HasFirstSubevent,
  Desires,
  NotHasProperty,
  CreatedBy,
  DefinedAs,
  NotDesires,
  NotCapableOf,
  LocatedNear,
  EtymologicallyDerivedFrom,
  SymbolOf,
};

inline constexpr std::size_t kNumRelations = 37;

struct RelationInfo {
  Relation relation;
  std::string_view name;
  // Cloze pattern with [[SUBJ]] and [[OBJ]] placeholders.
  std::string_view pattern;
};

const std::array<RelationInfo, kNumRelations>& all_relations();

std::string_view relation_name(Relation r);
std::optional<Relation> parse_relation(std::string_view name);

constexpr std::size_t relation_index(Relation r) {
  return static_cast<std::size_t>(r);
}

}  // namespace ckprobe
