#include "p5rec/data/synthetic.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "p5rec/common.hpp"

namespace p5rec::data {

namespace {

constexpr const char* kAdjectives[] = {"", "terrible", "poor", "okay", "good", "great"};
constexpr const char* kTitleWords[] = {"red", "soft", "tiny", "bold", "fresh", "smooth", "bright", "classic"};
constexpr const char* kTitleNouns[] = {"lotion", "brush", "cream", "ball", "lamp", "bottle", "glove", "mask"};
constexpr const char* kSyllables[] = {"ba", "ri", "na", "lo", "ke", "mi", "to", "sa", "du", "fe"};

void check_spec(const SyntheticSpec& s) {
  if (s.users == 0 || s.items == 0) throw DataError("synthetic spec needs at least one user and one item");
  if (s.min_len < 3 || s.min_len > s.max_len) throw DataError("synthetic spec needs 3 <= min_len <= max_len");
  if (s.items < s.max_len) {
    throw DataError("infeasible synthetic spec: " + std::to_string(s.items) + " items cannot fill sequences of length " +
                    std::to_string(s.max_len));
  }
  if (s.groups == 0 || s.items % s.groups != 0) throw DataError("item count must be a multiple of the group count");
  if (s.rule == PlantedRule::sum_mod && s.groups != 1) throw DataError("the sum_mod rule does not support groups");
  if (s.items / s.groups < s.max_len) {
    throw DataError("infeasible synthetic spec: groups of " + std::to_string(s.items / s.groups) +
                    " items are shorter than max_len");
  }
  if (s.domains.empty()) throw DataError("synthetic spec needs at least one domain");
  if (s.feature_words.empty()) throw DataError("synthetic spec needs feature words");
}

std::string user_name(std::uint64_t h) {
  std::string name;
  for (int i = 0; i < 3; ++i) {
    name += kSyllables[h % std::size(kSyllables)];
    h /= std::size(kSyllables);
  }
  return name;
}

}  // namespace

std::string synthetic_item_id(const SyntheticSpec& spec, std::size_t domain, std::size_t local) {
  return std::to_string(domain * spec.items + local + 1);
}

std::optional<std::string> SyntheticDataset::expected_next(const std::vector<std::string>& history) const {
  if (history.empty()) return std::nullopt;
  if (spec.rule == PlantedRule::successor) {
    auto it = successor.find(history.back());
    if (it == successor.end()) return std::nullopt;
    return it->second;
  }
  if (history.size() < 2) return std::nullopt;
  std::size_t global_a = 0;
  std::size_t global_b = 0;
  try {
    global_a = std::stoul(history[history.size() - 2]) - 1;
    global_b = std::stoul(history.back()) - 1;
  } catch (const std::exception&) {
    return std::nullopt;
  }
  const std::size_t domain = global_b / spec.items;
  if (global_a / spec.items != domain || domain >= spec.domains.size()) return std::nullopt;
  const std::size_t a = global_a % spec.items;
  const std::size_t b = global_b % spec.items;
  return synthetic_item_id(spec, domain, (a + b) % spec.items);
}

SyntheticDataset generate_synthetic_dataset(const SyntheticSpec& spec, std::uint64_t seed) {
  check_spec(spec);
  SyntheticDataset out;
  out.spec = spec;
  auto& ds = out.dataset;
  ds.name = "synthetic";

  const std::size_t group_size = spec.items / spec.groups;
  if (spec.rule == PlantedRule::successor) {
    out.rule_description = "next item = successor(last item); successor is a single cycle over each group of " +
                           std::to_string(group_size) + " items";
  } else {
    out.rule_description = "next item = (a + b) mod " + std::to_string(spec.items) +
                           " over zero-based indices of the last two items";
  }

  for (std::size_t u = 0; u < spec.users; ++u) {
    const std::string id = std::to_string(u + 1);
    const auto h = derive_seed(spec.habit_seed, u, 11);
    ds.add_user({id, spec.named_users ? user_name(h) : ""});
    out.generous_user[id] = (h >> 40) % 2 == 0;
  }

  for (std::size_t d = 0; d < spec.domains.size(); ++d) {
    Rng rng(derive_seed(seed, d, 1));
    for (std::size_t i = 0; i < spec.items; ++i) {
      const auto h = derive_seed(seed, d, 1000 + i);
      std::string title = std::string(kTitleWords[h % std::size(kTitleWords)]) + " " +
                          kTitleNouns[(h >> 8) % std::size(kTitleNouns)];
      ds.add_item({synthetic_item_id(spec, d, i), std::move(title), spec.domains[d]});
    }
    if (spec.rule == PlantedRule::successor) {
      for (std::size_t g = 0; g < spec.groups; ++g) {
        std::vector<std::size_t> cycle(group_size);
        std::iota(cycle.begin(), cycle.end(), g * group_size);
        std::shuffle(cycle.begin(), cycle.end(), rng);
        for (std::size_t k = 0; k < group_size; ++k) {
          out.successor[synthetic_item_id(spec, d, cycle[k])] =
              synthetic_item_id(spec, d, cycle[(k + 1) % group_size]);
        }
      }
    }
  }

  std::int64_t ts = 0;
  for (std::size_t u = 0; u < spec.users; ++u) {
    const std::string uid = std::to_string(u + 1);
    Rng rng(derive_seed(seed, u, 2));
    const std::size_t group = std::uniform_int_distribution<std::size_t>(0, spec.groups - 1)(rng);
    out.user_group[uid] = group;
    const bool generous = out.generous_user[uid];
    for (std::size_t d = 0; d < spec.domains.size(); ++d) {
      const std::size_t len = std::uniform_int_distribution<std::size_t>(spec.min_len, spec.max_len)(rng);
      std::vector<std::string> seq;
      if (spec.rule == PlantedRule::successor) {
        std::uniform_int_distribution<std::size_t> start(group * group_size, (group + 1) * group_size - 1);
        seq.push_back(synthetic_item_id(spec, d, start(rng)));
      } else {
        std::uniform_int_distribution<std::size_t> any(0, spec.items - 1);
        const auto a = any(rng);
        auto b = any(rng);
        if (b == a) b = (b + 1) % spec.items;
        seq.push_back(synthetic_item_id(spec, d, a));
        seq.push_back(synthetic_item_id(spec, d, b));
      }
      while (seq.size() < len) seq.push_back(*out.expected_next(seq));

      for (const auto& item : seq) {
        const auto ih = derive_seed(seed, std::stoull(item), 3);
        const int quality = static_cast<int>(ih % 2);
        const int rating = (generous ? 4 : 2) + quality;
        const std::string& feature = spec.feature_words[(ih >> 8) % spec.feature_words.size()];
        const std::string adj = kAdjectives[rating];
        RawReview r;
        r.user_id = uid;
        r.item_id = item;
        r.rating = rating;
        r.review_text = "i bought the " + ds.item(item).title + " and the " + feature + " is " + adj;
        r.summary = adj + " " + feature;
        r.feature_word = feature;
        r.explanation = "the " + feature + " is " + adj;
        r.timestamp = ++ts;
        ds.add_review(std::move(r));
      }
    }
  }
  return out;
}

}  // namespace p5rec::data
