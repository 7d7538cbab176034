#include <doctest.h>

#include <fstream>
#include <set>

#include "refcheck/corpus.hpp"
#include "refcheck/jsonl.hpp"
#include "refcheck/strutil.hpp"
#include "test_support.hpp"

using namespace refcheck;
using namespace refcheck::testing;

namespace {

std::vector<Topic> synthetic_taxonomy(int n) {
    std::vector<Topic> t;
    for (int i = 0; i < n; ++i) {
        t.push_back({"id" + std::to_string(i), "Area " + std::to_string(i % 12),
                     "Topic " + std::to_string(i)});
    }
    return t;
}

}  // namespace

TEST_CASE("taxonomy files parse tab-separated topics") {
    TempDir tmp("taxonomy");
    const auto path = tmp.path() / "tax.tsv";
    atomic_write(path,
                 "10010200\tInformation retrieval\tRetrieval models and ranking\n"
                 "\n"
                 "10010300\tMachine learning\tOnline learning settings\r\n");
    const auto topics = load_taxonomy(path);
    REQUIRE(topics.size() == 2);
    CHECK(topics[0].taxonomy_id == "10010200");
    CHECK(topics[0].area == "Information retrieval");
    CHECK(topics[0].topic == "Retrieval models and ranking");
    CHECK(topics[0].rendered() == "Information retrieval: Retrieval models and ranking");
    CHECK(topics[1].topic == "Online learning settings");

    atomic_write(path, "no tabs here\n");
    CHECK_THROWS_AS(load_taxonomy(path), ConfigError);
}

TEST_CASE("sample_topics draws n distinct topics, deterministically in the seed") {
    const auto taxonomy = synthetic_taxonomy(543);
    const auto sample = sample_topics(taxonomy, 200, 7);
    REQUIRE(sample.size() == 200);

    std::set<std::string> ids;
    for (const auto& t : sample) ids.insert(t.taxonomy_id);
    CHECK(ids.size() == 200);

    CHECK(sample_topics(taxonomy, 200, 7) == sample);
    CHECK(sample_topics(taxonomy, 200, 8) != sample);
}

TEST_CASE("sampling the whole taxonomy yields a permutation") {
    const auto taxonomy = synthetic_taxonomy(25);
    const auto sample = sample_topics(taxonomy, 25, 3);
    std::set<std::string> ids;
    for (const auto& t : sample) ids.insert(t.taxonomy_id);
    CHECK(ids.size() == 25);
}

TEST_CASE("sample size bounds") {
    const auto taxonomy = synthetic_taxonomy(10);
    CHECK_THROWS_AS(sample_topics(taxonomy, 0, 1), NOutOfRange);
    CHECK_THROWS_AS(sample_topics(taxonomy, 11, 1), NOutOfRange);
    CHECK(sample_topics(taxonomy, 1, 1).size() == 1);
}

TEST_CASE("parse_title_list matches the hand-labeled fixture corpus") {
    const auto cases = nlohmann::json::parse(read_file(repo_dir() / "fixtures/title_list_outputs.json"));
    REQUIRE(cases.is_array());
    REQUIRE(cases.size() >= 20);
    for (const auto& c : cases) {
        const auto raw = c.at("raw").get<std::string>();
        const auto expected = c.at("expected").get<std::vector<std::string>>();
        CAPTURE(raw);
        CHECK(parse_title_list(raw) == expected);
    }
}

TEST_CASE("parse_title_list is idempotent through a rendered numbered list") {
    const auto cases = nlohmann::json::parse(read_file(repo_dir() / "fixtures/title_list_outputs.json"));
    for (const auto& c : cases) {
        const auto parsed = parse_title_list(c.at("raw").get<std::string>());
        const auto reparsed = parse_title_list(render_numbered_list(parsed));
        CAPTURE(c.at("raw").get<std::string>());
        CHECK(reparsed == parsed);
    }
}

TEST_CASE("parsed titles carry no flanking whitespace or quote pair") {
    const auto cases = nlohmann::json::parse(read_file(repo_dir() / "fixtures/title_list_outputs.json"));
    for (const auto& c : cases) {
        for (const auto& title : parse_title_list(c.at("raw").get<std::string>())) {
            CHECK(title == trim(title));
            REQUIRE(!title.empty());
            const bool quote_pair = (title.front() == '"' && title.back() == '"') ||
                                    (title.front() == '\'' && title.back() == '\'');
            CHECK(!quote_pair);
        }
    }
}

TEST_CASE("generate_titles issues one temperature-0 request and parses records") {
    const PromptTemplate tmpl = TemplateSet::load(repo_dir() / "templates").generate_titles;
    const Topic topic{"901", "Information retrieval", "Retrieval models and ranking"};

    Gateway gateway(std::make_shared<ScriptedBackend>(), BackendPolicy{});
    TitleGenerator generator(gateway, tmpl, "test-model", 400);

    Usage usage;
    const auto refs = generator.generate(topic, 5, &usage);
    REQUIRE(refs.size() == 5);
    for (int i = 0; i < 5; ++i) {
        CHECK(refs[i].position_in_batch == i + 1);
        CHECK(refs[i].topic == topic);
        CHECK(refs[i].generator_model == "test-model");
        CHECK(!refs[i].title.empty());
    }
    CHECK(usage.requests == 1);
    CHECK(usage.prompt_tokens > 0);
}

TEST_CASE("short generations yield fewer records; refusals raise EmptyGeneration") {
    const TemplateSet templates = TemplateSet::load(repo_dir() / "templates");
    const Topic topic{"902", "Security", "Hardware attacks"};

    PromptRequest request;
    request.model_id = "test-model";
    request.prompt_text = templates.generate_titles.render(
        {{"area", topic.area}, {"topic", topic.topic}, {"k", "5"}});
    request.temperature = 0.0;
    request.n_samples = 1;
    request.max_tokens = 400;

    auto replay = std::make_shared<ReplayBackend>();
    Gateway gateway(replay, BackendPolicy{});
    TitleGenerator generator(gateway, templates.generate_titles, "test-model", 400);

    SUBCASE("three numbered lines give three records") {
        replay->add(cache_key(request), {"1. Alpha\n2. Beta\n3. Gamma"});
        const auto refs = generator.generate(topic, 5);
        REQUIRE(refs.size() == 3);
        CHECK(refs[2].position_in_batch == 3);
        CHECK(refs[2].title == "Gamma");
    }
    SUBCASE("more lines than k are capped at k") {
        replay->add(cache_key(request), {"1. A\n2. B\n3. C\n4. D\n5. E\n6. F\n7. G"});
        CHECK(generator.generate(topic, 5).size() == 5);
    }
    SUBCASE("a refusal has no parseable titles") {
        replay->add(cache_key(request), {"I cannot suggest titles for this topic."});
        CHECK_THROWS_AS(generator.generate(topic, 5), EmptyGeneration);
    }
}

TEST_CASE("candidate references round-trip through JSON") {
    CandidateReference ref;
    ref.id = 17;
    ref.title = "A Survey of Things";
    ref.topic = {"55", "Area", "Things"};
    ref.generator_model = "m1";
    ref.position_in_batch = 2;
    ref.label = Label::H;
    ref.scores["DQ1"] = 0.7;

    const CandidateReference back = candidate_from_json(to_json(ref));
    CHECK(back.id == ref.id);
    CHECK(back.title == ref.title);
    CHECK(back.topic == ref.topic);
    CHECK(back.position_in_batch == 2);
    CHECK(back.label == Label::H);
    CHECK(back.scores.at("DQ1") == 0.7);
}
