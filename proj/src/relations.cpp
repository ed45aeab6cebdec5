#include "ckprobe/relations.hpp"

namespace ckprobe {

namespace {

using R = Relation;

// Templates are kept verbatim, including their original spelling.
constexpr std::array<RelationInfo, kNumRelations> kRelations{{
    {R::RelatedTo, "RelatedTo", "[[SUBJ]] is related to [[OBJ]] ."},
    {R::HasContext, "HasContext", "[[SUBJ]] is used in the context of [[OBJ]] ."},
    {R::IsA, "IsA", "[[SUBJ]] is a [[OBJ]] ."},
    {R::DerivedFrom, "DerivedFrom", "[[OBJ]] is derived from [[SUBJ]] ."},
    {R::Synonym, "Synonym", "[[SUBJ]] and [[OBJ]] are same ."},
    {R::FormOf, "FormOf", "[[OBJ]] is the root word of [[SUBJ]] ."},
    {R::EtymologicallyRelatedTo, "EtymologicallyRelatedTo",
     "[[SUBJ]] is etymologically related to [[OBJ]] ."},
    {R::SimilarTo, "SimilarTo", "[[SUBJ]] is similar to [[OBJ]] ."},
    {R::AtLocation, "AtLocation", "Something you find at [[OBJ]] is [[SUBJ]] ."},
    {R::MannerOf, "MannerOf", "[[SUBJ]] is a way to [[OBJ]] ."},
    {R::PartOf, "PartOf", "[[SUBJ]] is part of [[OBJ]] ."},
    {R::Antonym, "Antonym", "[[SUBJ]] and [[OBJ]] are opposite ."},
    {R::HasProperty, "HasProperty", "[[SUBJ]] can be [[OBJ]] ."},
    {R::UsedFor, "UsedFor", "[[SUBJ]] may be used for [[OBJ]] ."},
    {R::DistinctFrom, "DistinctFrom", "[[SUBJ]] is not [[OBJ]] ."},
    {R::HasPrerequisite, "HasPrerequisite", "[[SUBJ]] requires [[OBJ]] ."},
    {R::HasSubevent, "HasSubevent", "When [[SUBJ]] , [[OBJ]] ."},
    {R::Causes, "Causes", "[[SUBJ]] causes [[OBJ]] ."},
    {R::HasA, "HasA", "[[SUBJ]] contains [[OBJ]] ."},
    {R::InstanceOf, "InstanceOf", "[[SUBJ]] is an instance of [[OBJ]] ."},
    {R::CapableOf, "CapableOf", "[[SUBJ]] can [[OBJ]] ."},
    {R::ReceivesAction, "ReceivesAction", "[[SUBJ]] can be [[OBJ]] ."},
    {R::MotivatedByGoal, "MotivatedByGoal", "You would [[SUBJ]] because [[OBJ]] ."},
    {R::CausesDesire, "CausesDesire", "[[SUBJ]] would make you want to [[OBJ]] ."},
    {R::MadeOf, "MadeOf", "[[SUBJ]] can be made of [[OBJ]] ."},
    {R::HasLastSubevent, "HasLastSubevent",
     "The last thing you do when you [[SUBJ]] is [[OBJ]] ."},
    {R::Entails, "Entails", "[[SUBJ]] entails [[OBJ]] ."},
    {R::HasFirstSubevent, "HasFirstSubevent",
     "The first thing you do when you [[SUBJ]] is [[OBJ]] ."},
    {R::Desires, "Desires", "[[SUBJ]] wants [[OBJ]] ."},
    {R::NotHasProperty, "NotHasProperty", "[[SUBJ]] is not [[OBJ]] ."},
    {R::CreatedBy, "CreatedBy", "[[SUBJ]] is creatd by [[OBJ]] ."},
    {R::DefinedAs, "DefinedAs", "[[SUBJ]] can be defined as [[OBJ]] ."},
    {R::NotDesires, "NotDesires", "[[SUBJ]] does not want [[OBJ]] ."},
    {R::NotCapableOf, "NotCapableOf", "[[SUBJ]] can not [[OBJ]] ."},
    {R::LocatedNear, "LocatedNear", "[[SUBJ]] is typically near [[OBJ]] ."},
    {R::EtymologicallyDerivedFrom, "EtymologicallyDerivedFrom",
     "[[SUBJ]] is etymologically derived from [[OBJ]] ."},
    {R::SymbolOf, "SymbolOf", "[[SUBJ]] is an symbol of [[OBJ]] ."},
}};

}  // namespace

const std::array<RelationInfo, kNumRelations>& all_relations() {
  return kRelations;
}

std::string_view relation_name(Relation r) {
  return kRelations[relation_index(r)].name;
}

std::optional<Relation> parse_relation(std::string_view name) {
  for (const auto& info : kRelations) {
    if (info.name == name) return info.relation;
  }
  return std::nullopt;
}

}  // namespace ckprobe
