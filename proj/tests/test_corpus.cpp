#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "doctest.h"
#include "p5rec/common.hpp"
#include "p5rec/data/corpus.hpp"
#include "p5rec/data/synthetic.hpp"
#include "p5rec/text/tokenizer.hpp"

using namespace p5rec;
using namespace p5rec::data;
using prompt::PromptId;
using prompt::TaskFamily;

namespace {

// Reviews over `users` x `items` drawn at random, every user and item used.
Dataset random_reviews(std::size_t n, std::size_t users, std::size_t items, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Dataset ds;
  for (std::size_t i = 0; i < items; ++i) ds.add_item({"i" + std::to_string(i), "thing " + std::to_string(i), "main"});
  for (std::size_t r = 0; r < n; ++r) {
    RawReview rv;
    rv.user_id = "u" + std::to_string(r < users ? r : rng() % users);
    rv.item_id = "i" + std::to_string(r < items ? r : rng() % items);
    rv.rating = static_cast<int>(rng() % 5) + 1;
    rv.timestamp = static_cast<std::int64_t>(r);
    ds.add_review(rv);
  }
  return ds;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

int local_index(const std::string& id) { return std::stoi(id) - 1; }

}  // namespace

TEST_CASE("rating split sizes and coverage on 1,000 reviews") {
  const auto ds = random_reviews(1000, 60, 40, 3);
  const auto s = split_rating_data(ds.reviews(), {0.8, 0.1, 0.1}, 17);
  CHECK(s.train.size() + s.valid.size() + s.test.size() == 1000);
  CHECK(std::abs(static_cast<int>(s.train.size()) - 800) <= 1);
  CHECK(std::abs(static_cast<int>(s.valid.size()) - 100) <= 1);
  CHECK(std::abs(static_cast<int>(s.test.size()) - 100) <= 1);
  std::set<std::string> users;
  std::set<std::string> items;
  for (auto i : s.train) {
    users.insert(ds.reviews()[i].user_id);
    items.insert(ds.reviews()[i].item_id);
  }
  CHECK(users.size() == 60);
  CHECK(items.size() == 40);
  std::set<std::size_t> all(s.train.begin(), s.train.end());
  all.insert(s.valid.begin(), s.valid.end());
  all.insert(s.test.begin(), s.test.end());
  CHECK(all.size() == 1000);

  const auto again = split_rating_data(ds.reviews(), {0.8, 0.1, 0.1}, 17);
  CHECK(again.train == s.train);
  CHECK(again.test == s.test);
  const auto other = split_rating_data(ds.reviews(), {0.8, 0.1, 0.1}, 18);
  CHECK(other.test != s.test);
}

TEST_CASE("rating split pins a single-review user to train") {
  auto ds = random_reviews(200, 10, 10, 5);
  ds.add_review({"loner", "i3", 4, "", "", {}, {}, 999});
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = split_rating_data(ds.reviews(), {0.8, 0.1, 0.1}, seed);
    CHECK(std::binary_search(s.train.begin(), s.train.end(), std::size_t{200}));
    CHECK_FALSE(s.warnings.empty());
  }
}

TEST_CASE("rating split preconditions") {
  const auto ds = random_reviews(10, 2, 2, 1);
  CHECK_THROWS_AS(split_rating_data({}, {0.8, 0.1, 0.1}, 1), DataError);
  CHECK_THROWS_AS(split_rating_data(ds.reviews(), {0.8, 0.1, 0.2}, 1), DataError);
  CHECK_THROWS_AS(split_rating_data(ds.reviews(), {1.2, -0.1, -0.1}, 1), DataError);
}

TEST_CASE("leave-one-out sequences") {
  auto s = split_sequential({"u", {"a", "b", "c", "d", "e"}});
  REQUIRE(s);
  CHECK(s->train == std::vector<std::string>{"a", "b", "c"});
  CHECK(s->valid == "d");
  CHECK(s->test == "e");
  s = split_sequential({"u", {"a", "b", "c"}});
  REQUIRE(s);
  CHECK(s->train == std::vector<std::string>{"a"});
  CHECK_FALSE(split_sequential({"u", {"a", "b"}}));
  const auto all = split_all_sequences({{"u1", {"a", "b"}}, {"u2", {"a", "b", "c"}}});
  CHECK(all.users.size() == 1);
  CHECK(all.skipped_users == std::vector<std::string>{"u1"});
}

TEST_CASE("negative sampling small cases") {
  const std::vector<std::string> pool = {"i1", "i2", "i3", "i4", "i5"};
  auto neg = sample_negatives({"i1"}, pool, 4, 9);
  std::sort(neg.begin(), neg.end());
  CHECK(neg == std::vector<std::string>{"i2", "i3", "i4", "i5"});
  CHECK(sample_negatives({"i1"}, pool, 0, 9).empty());
  CHECK(sample_negatives({"i1"}, pool, 3, 4) == sample_negatives({"i1"}, pool, 3, 4));
  try {
    sample_negatives({"i1", "i2"}, pool, 4, 1);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find('3') != std::string::npos);
  }
}

TEST_CASE("negative sampling inclusion frequency matches the hypergeometric rate") {
  std::vector<std::string> pool;
  for (int i = 0; i < 1000; ++i) pool.push_back("i" + std::to_string(i));
  const std::set<std::string> interacted = {"i0"};
  const int trials = 10000;
  int hits = 0;
  for (int s = 0; s < trials; ++s) {
    const auto neg = sample_negatives(interacted, pool, 99, static_cast<std::uint64_t>(s));
    REQUIRE(neg.size() == 99);
    if (std::find(neg.begin(), neg.end(), "i500") != neg.end()) ++hits;
  }
  const double p = 99.0 / 999.0;
  const double sigma = std::sqrt(p * (1 - p) / trials);
  CHECK(std::abs(hits / static_cast<double>(trials) - p) < 3 * sigma);
}

TEST_CASE("candidate sets are validated") {
  std::vector<std::string> pool;
  for (int i = 0; i < 200; ++i) pool.push_back("i" + std::to_string(i));
  const std::set<std::string> interacted = {"i1", "i2", "i3"};
  const auto set = make_candidate_set("i3", interacted, pool, 100, 7);
  CHECK(set.size() == 100);
  CHECK_NOTHROW(validate_candidate_set(set, interacted));
  auto shuffled = set.shuffled(1);
  CHECK(shuffled.size() == 100);
  CHECK(std::count(shuffled.begin(), shuffled.end(), "i3") == 1);

  CandidateSet bad{"i3", {"i3", "i9"}};
  CHECK_THROWS_AS(validate_candidate_set(bad, interacted), DataError);
  bad = {"i3", {"i9", "i9"}};
  CHECK_THROWS_AS(validate_candidate_set(bad, interacted), DataError);
  bad = {"i3", {"i1"}};
  CHECK_THROWS_AS(validate_candidate_set(bad, interacted), DataError);
}

TEST_CASE("rating perturbation") {
  for (int score = 1; score <= 5; ++score) {
    CHECK(perturb_rating(score, 0.0, 3) == static_cast<double>(score));
  }
  std::set<std::string> seen;
  for (std::uint64_t s = 0; s < 20000; ++s) {
    const double v = perturb_rating(static_cast<int>(s % 5) + 1, 1.0, s);
    CHECK(on_rating_grid(v));
    seen.insert(format_rating(v));
  }
  CHECK(seen.size() == 41);
  CHECK_FALSE(on_rating_grid(0.9));
  CHECK_FALSE(on_rating_grid(4.25));
  CHECK(format_rating(4.0) == "4.0");

  // Only draws landing at or above 4.95 round to 5.0.
  const int draws = 100000;
  int top = 0;
  for (int s = 0; s < draws; ++s) {
    if (perturb_rating(5, 0.5, static_cast<std::uint64_t>(s) + 77) == 5.0) ++top;
  }
  CHECK(std::abs(top / static_cast<double>(draws) - normal_cdf(0.1)) < 0.01);
}

TEST_CASE("one review with full sampling yields one pair per pretrain rating template") {
  Dataset ds;
  ds.add_user({"1", "alice"});
  ds.add_item({"7", "red kettle", "main"});
  ds.add_review({"1", "7", 4, "nice kettle", "good", std::string("price"), std::string("the price is good"), 1});
  CorpusOptions opts;
  opts.sample_fraction = 1.0;
  opts.families = {TaskFamily::rating};
  const auto prepared = prepare_data(ds, opts, 1);
  const auto& reg = prompt::default_registry();
  const auto split = prompt::split_registry(reg, prompt::HoldoutPolicy::last());
  const auto report = build_pairs(prepared, reg, split, opts, 1);
  CHECK(report.pairs.size() == 9);
  std::set<PromptId> ids;
  for (const auto& p : report.pairs) {
    ids.insert(p.prompt_id);
    CHECK(p.split == SplitTag::train);
    CHECK_FALSE(p.target_text.empty());
    CHECK(split.is_pretrain(p.prompt_id));
  }
  CHECK(ids.size() == 9);

  opts.sample_fraction = 0.0;
  CHECK(build_pairs(prepared, reg, split, opts, 1).pairs.empty());
  opts.sample_fraction = 1.5;
  CHECK_THROWS_AS(build_pairs(prepared, reg, split, opts, 1), DataError);
}

TEST_CASE("template sampling count stays inside the binomial interval") {
  auto ds = random_reviews(100, 100, 100, 8);
  CorpusOptions opts;
  opts.sample_fraction = 0.5;
  opts.families = {TaskFamily::rating};
  opts.rating_ratios = {1.0, 0.0, 0.0};
  const auto prepared = prepare_data(ds, opts, 2);
  REQUIRE(prepared.rating.train.size() == 100);
  const auto& reg = prompt::default_registry();
  const auto split = prompt::split_registry(reg, prompt::HoldoutPolicy::last());
  const double half_width = 2.576 * std::sqrt(900 * 0.25);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto report = build_pairs(prepared, reg, split, opts, seed);
    CHECK(report.skipped_total == 0);
    const auto n = static_cast<double>(report.pairs.size());
    CHECK(std::abs(n - 450.0) <= half_width);
  }
}

TEST_CASE("evaluation splits keep the integer rating") {
  const auto ds = random_reviews(50, 5, 5, 4);
  std::vector<std::size_t> idx(50);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  CorpusOptions opts;
  for (const auto& d : make_review_data(ds, idx, TaskFamily::rating, SplitTag::test, opts, 3)) {
    CHECK(d.bindings.value("star_rating") == format_rating(d.rating));
  }
  int moved = 0;
  for (const auto& d : make_review_data(ds, idx, TaskFamily::rating, SplitTag::train, opts, 3)) {
    const double v = std::stod(d.bindings.value("star_rating"));
    CHECK(on_rating_grid(v));
    if (v != d.rating) ++moved;
  }
  CHECK(moved > 0);
}

TEST_CASE("held-out prompts never reach the training stream") {
  SyntheticSpec spec;
  const auto syn = generate_synthetic_dataset(spec, 4);
  CorpusOptions opts;
  const auto prepared = prepare_data(syn.dataset, opts, 4);
  const auto& reg = prompt::default_registry();
  const auto split = prompt::split_registry(reg, prompt::HoldoutPolicy::last());
  const auto report = build_pairs(prepared, reg, split, opts, 4);
  std::set<TaskFamily> families;
  for (const auto& p : report.pairs) {
    CHECK_FALSE(split.is_zeroshot(p.prompt_id));
    families.insert(p.family);
  }
  CHECK(families.size() == 5);

  auto leaked = report.pairs;
  leaked.push_back({"x", "y", PromptId{2, 13}, TaskFamily::sequential, SplitTag::train});
  CHECK_THROWS_AS(assert_no_leakage(leaked, split), DataError);
}

TEST_CASE("training data never exposes held-out sequence items") {
  SyntheticSpec spec;
  spec.users = 80;
  const auto syn = generate_synthetic_dataset(spec, 12);
  CorpusOptions opts;
  const auto prepared = prepare_data(syn.dataset, opts, 12);
  std::map<std::string, SequenceSplit> by_user;
  for (const auto& s : prepared.sequential.users) by_user[s.user_id] = s;
  for (auto family : {TaskFamily::direct, TaskFamily::sequential}) {
    const auto data = make_data(prepared, family, SplitTag::train, opts, 12);
    CHECK_FALSE(data.empty());
    for (const auto& d : data) {
      const auto& s = by_user.at(d.user_id);
      CHECK(d.item_id != s.test);
      CHECK(d.item_id != s.valid);
      for (const auto& h : d.history) {
        CHECK(h != s.test);
        CHECK(h != s.valid);
      }
    }
  }
  for (const auto& d : make_data(prepared, TaskFamily::sequential, SplitTag::test, opts, 12)) {
    const auto& s = by_user.at(d.user_id);
    CHECK(d.item_id == s.test);
    CHECK(d.history.back() == s.valid);
    CHECK(d.history.size() <= opts.max_history);
  }
  for (const auto& d : make_data(prepared, TaskFamily::direct, SplitTag::test, opts, 12)) {
    if (d.candidates.empty()) continue;
    CHECK(d.candidates.size() == opts.direct_candidates);
    CHECK(std::count(d.candidates.begin(), d.candidates.end(), item_token(d.item_id)) == 1);
  }
}

TEST_CASE("synthetic successor data follows its rule") {
  SyntheticSpec spec;
  spec.users = 50;
  spec.items = 20;
  spec.max_len = 8;
  const auto syn = generate_synthetic_dataset(spec, 21);
  const auto seqs = syn.dataset.sequences();
  CHECK(seqs.size() == 50);
  CHECK(syn.dataset.items().size() == 20);
  for (const auto& s : seqs) {
    CHECK(s.items.size() >= spec.min_len);
    CHECK(s.items.size() <= spec.max_len);
    for (std::size_t i = 1; i < s.items.size(); ++i) {
      CHECK(syn.successor.at(s.items[i - 1]) == s.items[i]);
      const std::vector<std::string> prefix(s.items.begin(), s.items.begin() + static_cast<long>(i));
      CHECK(syn.expected_next(prefix) == s.items[i]);
    }
  }
  // single cycle: following successors from any item visits all 20
  std::set<std::string> visited;
  std::string cur = synthetic_item_id(spec, 0, 0);
  for (int i = 0; i < 20; ++i) {
    visited.insert(cur);
    cur = syn.successor.at(cur);
  }
  CHECK(visited.size() == 20);
  CHECK(cur == synthetic_item_id(spec, 0, 0));

  // ratings follow the per-user habit
  for (const auto& r : syn.dataset.reviews()) {
    const bool generous = syn.generous_user.at(r.user_id);
    CHECK((generous ? r.rating >= 4 : r.rating <= 3));
    CHECK(r.feature_word.has_value());
    CHECK(r.explanation->find(*r.feature_word) != std::string::npos);
  }
}

TEST_CASE("synthetic sum_mod data follows its rule") {
  SyntheticSpec spec;
  spec.rule = PlantedRule::sum_mod;
  spec.users = 40;
  spec.items = 12;
  const auto syn = generate_synthetic_dataset(spec, 5);
  for (const auto& s : syn.dataset.sequences()) {
    for (std::size_t i = 2; i < s.items.size(); ++i) {
      const int expect = (local_index(s.items[i - 2]) + local_index(s.items[i - 1])) % 12;
      CHECK(local_index(s.items[i]) == expect);
    }
  }
}

TEST_CASE("synthetic generation is deterministic and rejects infeasible specs") {
  SyntheticSpec spec;
  std::ostringstream a;
  std::ostringstream b;
  std::ostringstream c;
  write_dataset(a, generate_synthetic_dataset(spec, 9).dataset);
  write_dataset(b, generate_synthetic_dataset(spec, 9).dataset);
  write_dataset(c, generate_synthetic_dataset(spec, 10).dataset);
  CHECK(a.str() == b.str());
  CHECK(a.str() != c.str());

  auto bad = spec;
  bad.min_len = 2;
  CHECK_THROWS_AS(generate_synthetic_dataset(bad, 1), DataError);
  bad = spec;
  bad.items = 6;
  CHECK_THROWS_AS(generate_synthetic_dataset(bad, 1), DataError);
  bad = spec;
  bad.groups = 3;
  CHECK_THROWS_AS(generate_synthetic_dataset(bad, 1), DataError);
  bad = spec;
  bad.min_len = 9;
  CHECK_THROWS_AS(generate_synthetic_dataset(bad, 1), DataError);
  bad = spec;
  bad.domains.clear();
  CHECK_THROWS_AS(generate_synthetic_dataset(bad, 1), DataError);
}

TEST_CASE("pair files round trip in canonical order") {
  const auto syn = generate_synthetic_dataset(SyntheticSpec{}, 2);
  CorpusOptions opts;
  const auto prepared = prepare_data(syn.dataset, opts, 2);
  const auto& reg = prompt::default_registry();
  const auto split = prompt::split_registry(reg, prompt::HoldoutPolicy::last());
  auto pairs = build_pairs(prepared, reg, split, opts, 2).pairs;
  canonical_order(pairs);
  std::stringstream io;
  write_pairs(io, pairs);
  const auto back = read_pairs(io);
  CHECK(back == pairs);

  auto shuffled = pairs;
  std::shuffle(shuffled.begin(), shuffled.end(), std::mt19937_64(1));
  canonical_order(shuffled);
  CHECK(shuffled == pairs);

  std::stringstream bad("{\"format\":\"other\"}\n");
  CHECK_THROWS_AS(read_pairs(bad), DataError);
}

TEST_CASE("dataset files round trip") {
  const auto syn = generate_synthetic_dataset(SyntheticSpec{}, 6);
  std::stringstream io;
  write_dataset(io, syn.dataset);
  const auto back = read_dataset(io);
  CHECK(back.reviews().size() == syn.dataset.reviews().size());
  CHECK(back.users().size() == syn.dataset.users().size());
  std::stringstream bad("{\"format\":\"p5rec-raw\",\"version\":1}\n{\"type\":\"review\",\"user\":\"u\",\"item\":\"i\",\"rating\":9}\n");
  CHECK_THROWS_AS(read_dataset(bad), DataError);
}

TEST_CASE("dataset at the scale of the largest public benchmark parses and splits") {
  const std::size_t users = 22363;
  const std::size_t items = 12101;
  const std::size_t reviews = 198502;
  Dataset ds;
  ds.name = "beauty-scale";
  std::mt19937_64 rng(1);
  for (std::size_t r = 0; r < reviews; ++r) {
    const std::size_t u = r % users;
    const std::size_t i = r < items ? r : rng() % items;
    ds.add_review({"u" + std::to_string(u), "i" + std::to_string(i), static_cast<int>(r % 5) + 1, "", "", {}, {},
                   static_cast<std::int64_t>(r)});
  }
  std::stringstream io;
  write_dataset(io, ds);
  const auto back = read_dataset(io);
  const auto stats = dataset_stats(back);
  CHECK(stats.users == users);
  CHECK(stats.items == items);
  CHECK(stats.reviews == reviews);
  const auto s = split_rating_data(back.reviews(), {0.8, 0.1, 0.1}, 1);
  CHECK(s.train.size() + s.valid.size() + s.test.size() == reviews);
  const auto seq = split_all_sequences(back.sequences());
  CHECK(seq.users.size() == users);

  const auto vocab = text::extend_with_atomic_ids(text::Vocab::byte_level(), back.user_ids(), back.item_ids());
  CHECK(vocab.size() == text::kBaseVocabSize + static_cast<int>(users + items));
}
