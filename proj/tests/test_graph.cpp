#include "elicit/error.hpp"
#include "elicit/graph.hpp"
#include "elicit/graph_codec.hpp"

#include <gtest/gtest.h>

#include <random>

namespace elicit {
namespace {

DecisionValue value(std::string v) { return DecisionValue{{std::move(v)}, std::nullopt}; }

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an elicit::Error";
  return ErrorCode::InvalidArgument;
}

TEST(NodeKindTest, ElevenKindsSplitIntoActionsAndInteractions) {
  int actions = 0, interactions = 0;
  for (NodeKind k : kAllNodeKinds) {
    EXPECT_NE(is_data_action(k), is_interaction(k));
    actions += is_data_action(k);
    interactions += is_interaction(k);
    EXPECT_EQ(parse_node_kind(to_string(k)), k);
  }
  EXPECT_EQ(actions, 4);
  EXPECT_EQ(interactions, 7);
  EXPECT_EQ(parse_node_kind("consent"), NodeKind::Consent);
  EXPECT_FALSE(parse_node_kind("Delete").has_value());
}

TEST(GraphTest, AddDataActionOnEmptyGraph) {
  PrivacyGraph g;
  g.apply(event::AddDataAction{"n1", NodeKind::Collect, "Collect application focus status"});
  ASSERT_EQ(g.data_flow().size(), 1u);
  EXPECT_EQ(g.node("n1").label, "Collect application focus status");
  EXPECT_EQ(g.event_count(), 1u);
  EXPECT_TRUE(g.check_invariants().empty());
}

TEST(GraphTest, SetDecisionRecordsValue) {
  PrivacyGraph g;
  g.apply(event::AddDataAction{"n1", NodeKind::Collect, "Collect application focus status"});
  g.apply(event::SetDecision{"n1", DecisionKey::from_canonical("frequency"), value("Continuously")});
  const auto& d = g.node("n1").decisions;
  ASSERT_EQ(d.count(DecisionKey::from_canonical("frequency")), 1u);
  EXPECT_EQ(d.at(DecisionKey::from_canonical("frequency")).selected.front(), "Continuously");
}

TEST(GraphTest, RejectedEventsLeaveGraphUnchanged) {
  PrivacyGraph g;
  g.apply(event::AddDataAction{"n1", NodeKind::Collect, "Collect x"});
  g.apply(event::AddInteraction{"n2", NodeKind::Consent, "Consent to x", "n1"});
  const PrivacyGraph before = g;

  EXPECT_EQ(code_of([&] { g.apply(event::AddInteraction{"n3", NodeKind::Consent, "c", "missing"}); }),
            ErrorCode::UnknownNode);
  EXPECT_EQ(code_of([&] { g.apply(event::AddInteraction{"n3", NodeKind::Notice, "n", "n2"}); }),
            ErrorCode::KindMismatch);
  EXPECT_EQ(code_of([&] { g.apply(event::AddDataAction{"n3", NodeKind::Consent, "bad"}); }),
            ErrorCode::KindMismatch);
  EXPECT_EQ(code_of([&] { g.apply(event::AddDataAction{"n3", NodeKind::Collect, "Collect x"}); }),
            ErrorCode::DuplicateNode);
  EXPECT_EQ(code_of([&] { g.apply(event::AddDataAction{"n1", NodeKind::Store, "Store x"}); }),
            ErrorCode::DuplicateNode);
  EXPECT_EQ(code_of([&] {
              g.apply(event::ReviseDecision{"n1", DecisionKey::from_canonical("k"), value("v")});
            }),
            ErrorCode::UnknownDecision);
  EXPECT_EQ(code_of([&] { g.apply(GraphEvent{7, event::RemoveNode{"n1"}}); }), ErrorCode::SequenceGap);
  EXPECT_EQ(g, before);
}

TEST(GraphTest, RemovingDataActionCascadesToInteractions) {
  PrivacyGraph g;
  g.apply(event::AddDataAction{"n1", NodeKind::Collect, "Collect x"});
  g.apply(event::AddDataAction{"n2", NodeKind::Store, "Store x"});
  g.apply(event::AddInteraction{"n3", NodeKind::Consent, "Consent", "n1"});
  g.apply(event::AddInteraction{"n4", NodeKind::Control, "Control", "n2"});
  g.apply(event::RemoveNode{"n1"});
  EXPECT_EQ(g.data_flow(), std::vector<NodeId>{"n2"});
  EXPECT_EQ(g.interactions(), std::vector<NodeId>{"n4"});
  EXPECT_EQ(g.find("n3"), nullptr);
  EXPECT_TRUE(g.check_invariants().empty());
}

TEST(GraphTest, ReviseWithSameValueMatchesSingleSet) {
  const auto key = DecisionKey::from_canonical("consent_mode");
  PrivacyGraph once, twice;
  for (auto* g : {&once, &twice}) g->apply(event::AddDataAction{"n1", NodeKind::Collect, "Collect x"});
  once.apply(event::SetDecision{"n1", key, value("Opt-in")});
  twice.apply(event::SetDecision{"n1", key, value("Opt-in")});
  twice.apply(event::ReviseDecision{"n1", key, value("Opt-in")});
  EXPECT_TRUE(same_state(once, twice));
  EXPECT_NE(once, twice);  // logs differ
}

TEST(MissingKindsTest, EmptyOneAndSaturated) {
  PrivacyGraph g;
  EXPECT_EQ(missing_kinds(g).size(), 11u);
  g.apply(event::AddDataAction{"c", NodeKind::Collect, "Collect"});
  auto missing = missing_kinds(g);
  // set-difference oracle
  std::set<NodeKind> expected(kAllNodeKinds.begin(), kAllNodeKinds.end());
  expected.erase(NodeKind::Collect);
  EXPECT_EQ(missing, expected);
  for (NodeKind k : {NodeKind::Process, NodeKind::Store, NodeKind::Share}) {
    g.apply(event::AddDataAction{std::string(to_string(k)), k, std::string(to_string(k))});
  }
  for (NodeKind k : kAllNodeKinds) {
    if (is_interaction(k)) {
      g.apply(event::AddInteraction{std::string(to_string(k)), k, std::string(to_string(k)), "c"});
    }
  }
  EXPECT_TRUE(missing_kinds(g).empty());
}

TEST(ReplayTest, EmptyAndGap) {
  EXPECT_EQ(replay({}), PrivacyGraph{});
  std::vector<GraphEvent> events = {
      GraphEvent{1, event::AddDataAction{"n1", NodeKind::Collect, "Collect"}},
      GraphEvent{3, event::AddDataAction{"n2", NodeKind::Store, "Store"}},
  };
  try {
    replay(events);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SequenceGap);
    EXPECT_NE(std::string(e.what()).find("2"), std::string::npos);
  }
}

TEST(ReplayTest, ReportsSequenceOfFailingEvent) {
  std::vector<GraphEvent> events = {
      GraphEvent{1, event::AddDataAction{"n1", NodeKind::Collect, "Collect"}},
      GraphEvent{2, event::SetDecision{"zz", DecisionKey::from_canonical("k"), value("v")}},
  };
  try {
    replay(events);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownNode);
    EXPECT_EQ(std::string(e.what()).rfind("event 2", 0), 0u);
  }
}

// Random event generator shared by the fold/replay property checks. Mixes
// valid and invalid events; invalid ones are expected to be rejected.
EventPayload random_payload(std::mt19937_64& rng, const PrivacyGraph& g, int& next_id) {
  auto pick_node = [&](bool data_action_only) -> NodeId {
    std::vector<NodeId> ids;
    for (const auto& [id, n] : g.nodes()) {
      if (!data_action_only || is_data_action(n.kind)) ids.push_back(id);
    }
    if (ids.empty() || rng() % 10 == 0) return "ghost";
    return ids[rng() % ids.size()];
  };
  NodeKind kind = kAllNodeKinds[rng() % kAllNodeKinds.size()];
  std::string label = std::string(to_string(kind)) + " " + std::to_string(rng() % 4);
  auto key = DecisionKey::from_canonical("k" + std::to_string(rng() % 3));
  switch (rng() % 6) {
    case 0:
    case 1: return event::AddDataAction{"n" + std::to_string(next_id++), kind, label};
    case 2: return event::AddInteraction{"n" + std::to_string(next_id++), kind, label, pick_node(rng() % 4 != 0)};
    case 3: return event::SetDecision{pick_node(false), key, value("v" + std::to_string(rng() % 3))};
    case 4: return event::ReviseDecision{pick_node(false), key, value("r")};
    default: return event::RemoveNode{pick_node(false)};
  }
}

TEST(ReplayTest, ReplayEqualsFoldAndRoundTripsThroughLog) {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 200; ++trial) {
    PrivacyGraph folded;
    int next_id = 0;
    for (int i = 0; i < 30; ++i) {
      GraphEvent ev{folded.event_count() + 1, random_payload(rng, folded, next_id)};
      try {
        folded = apply_event(folded, ev);
      } catch (const Error&) {
      }
    }
    PrivacyGraph replayed = replay(folded.log());
    EXPECT_EQ(replayed, folded);
    EXPECT_EQ(replay(read_event_log(write_event_log(folded.log()))), folded);
    EXPECT_TRUE(same_state(graph_from_snapshot(graph_snapshot(folded)), folded));
  }
}

TEST(EventLogTest, RejectsWrongHeaderAndVersion) {
  EXPECT_EQ(code_of([] { read_event_log("{\"schema\":\"other\"}\n"); }), ErrorCode::ParseError);
  EXPECT_EQ(code_of([] { read_event_log("{\"schema\":\"elicit.graph-events\",\"version\":9}\n"); }),
            ErrorCode::SchemaVersionMismatch);
  EXPECT_EQ(code_of([] {
              read_event_log("{\"schema\":\"elicit.graph-events\",\"version\":1}\n{\"seq\":1,\"type\":\"x\"}\n");
            }),
            ErrorCode::ParseError);
}

TEST(DecisionKeyTest, Canonicalization) {
  EXPECT_EQ(canonicalize_key("Consent Mode").str(), "consent_mode");
  EXPECT_EQ(canonicalize_key("consent_mode").str(), "consent_mode");
  EXPECT_EQ(canonicalize_key("  Data--Type!! ").str(), "data_type");
  EXPECT_EQ(code_of([] { canonicalize_key("  --!!  "); }), ErrorCode::EmptyAfterCanonicalization);
  std::mt19937_64 rng(7);
  const std::string alphabet = "aZ9 _-!?.Q";
  for (int i = 0; i < 500; ++i) {
    std::string raw;
    for (int n = 0; n < 12; ++n) raw.push_back(alphabet[rng() % alphabet.size()]);
    try {
      auto once = canonicalize_key(raw);
      EXPECT_TRUE(is_canonical_key(once.str()));
      EXPECT_EQ(canonicalize_key(once.str()), once);
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::EmptyAfterCanonicalization);
    }
  }
}

}  // namespace
}  // namespace elicit
