#include <doctest.h>

#include "refcheck/labeler.hpp"
#include "refcheck/jsonl.hpp"
#include "test_support.hpp"

using namespace refcheck;
using namespace refcheck::testing;

TEST_CASE("build_quoted_query wraps titles in double quotes") {
    CHECK(build_quoted_query("LMs are few-shot learners") == "\"LMs are few-shot learners\"");
    CHECK(build_quoted_query("Attention") == "\"Attention\"");
    // Interior double quotes become apostrophes before wrapping.
    CHECK(build_quoted_query("The \"Best\" Method") == "\"The 'Best' Method\"");
}

TEST_CASE("zero results labels H, any positive count labels G") {
    auto fixture = std::make_shared<FixtureSearchBackend>();
    fixture->add("\"Ghost Paper\"", 0);
    fixture->add("\"Real Paper\"", 3);

    FixedClock clock("2023-05-01T00:00:00Z");
    Labeler labeler(*fixture, clock, 0, 1);

    const LabelOutcome h = labeler.label_reference("Ghost Paper");
    REQUIRE(h.label.has_value());
    CHECK(*h.label == Label::H);
    REQUIRE(h.summary.has_value());
    CHECK(h.summary->query == "\"Ghost Paper\"");
    CHECK(h.summary->result_count_is_zero);
    CHECK(h.summary->retrieved_at == "2023-05-01T00:00:00Z");

    const LabelOutcome g = labeler.label_reference("Real Paper");
    REQUIRE(g.label.has_value());
    CHECK(*g.label == Label::G);
    CHECK_FALSE(g.summary->result_count_is_zero);
}

TEST_CASE("backend outage leaves the record unlabeled after retries") {
    auto fixture = std::make_shared<FixtureSearchBackend>();  // empty: every query fails
    FixedClock clock;
    Labeler labeler(*fixture, clock, 2, 1);

    const LabelOutcome outcome = labeler.label_reference("Anything");
    CHECK_FALSE(outcome.label.has_value());
    CHECK_FALSE(outcome.summary.has_value());
    CHECK(fixture->lookups() == 3);  // first attempt + two retries
}

TEST_CASE("labels are a pure function of the fixture") {
    auto fixture = std::make_shared<FixtureSearchBackend>();
    fixture->add("\"T\"", 0);
    FixedClock clock;
    Labeler labeler(*fixture, clock, 0, 1);
    const auto a = labeler.label_reference("T");
    const auto b = labeler.label_reference("T");
    CHECK(a.label == b.label);
    CHECK(a.summary->retrieved_at == b.summary->retrieved_at);
}

TEST_CASE("scripted search counts depend only on the planted ground truth") {
    ScriptedSearchBackend search;
    const std::string grounded_title = [] {
        // find a planted-grounded title deterministically
        for (int i = 0;; ++i) {
            const std::string t = "Probe Title " + std::to_string(i);
            if (ScriptedBackend::planted_grounded(t)) return t;
        }
    }();
    CHECK(search.result_count(build_quoted_query(grounded_title)) > 0);
}
