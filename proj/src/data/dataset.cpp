#include "p5rec/data/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "p5rec/common.hpp"

namespace p5rec::data {

namespace {
constexpr const char* kFormat = "p5rec-raw";
constexpr int kVersion = 1;
}  // namespace

void Dataset::add_user(UserInfo user) {
  if (user.id.empty()) throw DataError("user id must be non-empty");
  auto it = user_index_.find(user.id);
  if (it != user_index_.end()) {
    if (!user.name.empty()) users_[it->second].name = std::move(user.name);
    return;
  }
  user_index_.emplace(user.id, users_.size());
  users_.push_back(std::move(user));
}

void Dataset::add_item(ItemInfo item) {
  if (item.id.empty()) throw DataError("item id must be non-empty");
  auto it = item_index_.find(item.id);
  if (it != item_index_.end()) {
    auto& existing = items_[it->second];
    if (!item.title.empty()) existing.title = std::move(item.title);
    if (!item.domain.empty()) existing.domain = std::move(item.domain);
    return;
  }
  item_index_.emplace(item.id, items_.size());
  items_.push_back(std::move(item));
}

void Dataset::add_review(RawReview review) {
  if (review.user_id.empty() || review.item_id.empty()) throw DataError("review with empty user or item id");
  if (review.rating < 1 || review.rating > 5) {
    throw DataError("review (" + review.user_id + ", " + review.item_id + ") has rating " +
                    std::to_string(review.rating) + " outside [1, 5]");
  }
  if (!user_index_.count(review.user_id)) add_user({review.user_id, ""});
  if (!item_index_.count(review.item_id)) add_item({review.item_id, "", ""});
  reviews_.push_back(std::move(review));
}

const UserInfo& Dataset::user(const std::string& id) const {
  auto it = user_index_.find(id);
  if (it == user_index_.end()) throw DataError("unknown user '" + id + "'");
  return users_[it->second];
}

const ItemInfo& Dataset::item(const std::string& id) const {
  auto it = item_index_.find(id);
  if (it == item_index_.end()) throw DataError("unknown item '" + id + "'");
  return items_[it->second];
}

std::string Dataset::user_description(const std::string& id) const {
  const auto& u = user(id);
  return u.name.empty() ? "user_" + u.id : u.name;
}

std::vector<std::string> Dataset::item_ids() const {
  std::vector<std::string> out;
  out.reserve(items_.size());
  for (const auto& i : items_) out.push_back(i.id);
  return out;
}

std::vector<std::string> Dataset::user_ids() const {
  std::vector<std::string> out;
  out.reserve(users_.size());
  for (const auto& u : users_) out.push_back(u.id);
  return out;
}

std::vector<InteractionSequence> Dataset::sequences() const {
  std::vector<std::vector<std::size_t>> per_user(users_.size());
  for (std::size_t r = 0; r < reviews_.size(); ++r) per_user[user_index_.at(reviews_[r].user_id)].push_back(r);
  std::vector<InteractionSequence> out;
  for (std::size_t u = 0; u < users_.size(); ++u) {
    auto& idx = per_user[u];
    if (idx.empty()) continue;
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return reviews_[a].timestamp < reviews_[b].timestamp; });
    InteractionSequence seq{users_[u].id, {}};
    for (auto r : idx) seq.items.push_back(reviews_[r].item_id);
    out.push_back(std::move(seq));
  }
  return out;
}

std::map<std::string, std::set<std::string>> Dataset::interactions() const {
  std::map<std::string, std::set<std::string>> out;
  for (const auto& r : reviews_) out[r.user_id].insert(r.item_id);
  return out;
}

Dataset Dataset::subset_domain(const std::string& domain) const {
  Dataset out;
  out.name = name + ":" + domain;
  for (const auto& r : reviews_) {
    const auto& it = item(r.item_id);
    if (it.domain != domain) continue;
    out.add_user(user(r.user_id));
    out.add_item(it);
    out.add_review(r);
  }
  return out;
}

DatasetStats dataset_stats(const Dataset& dataset) {
  DatasetStats s{dataset.users().size(), dataset.items().size(), dataset.reviews().size(), 0.0};
  if (s.users > 0 && s.items > 0) {
    s.sparsity_percent = 100.0 * static_cast<double>(s.reviews) / (static_cast<double>(s.users) * static_cast<double>(s.items));
  }
  return s;
}

TransferStats transfer_stats(const Dataset& source, const Dataset& target) {
  std::set<std::string> source_users;
  for (const auto& r : source.reviews()) source_users.insert(r.user_id);
  TransferStats s;
  std::set<std::string> shared;
  std::set<std::string> items;
  for (const auto& r : target.reviews()) {
    if (!source_users.count(r.user_id)) continue;
    shared.insert(r.user_id);
    items.insert(r.item_id);
    ++s.target_reviews;
  }
  s.shared_users = shared.size();
  s.target_items = items.size();
  return s;
}

Dataset read_dataset(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("dataset stream is empty (missing format header)");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("dataset header is not JSON: ") + e.what());
  }
  if (header.value("format", "") != kFormat || header.value("version", 0) != kVersion) {
    throw DataError("unsupported dataset format header: " + line);
  }
  Dataset ds;
  ds.name = header.value("name", "dataset");
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto rec = nlohmann::json::parse(line);
      const auto type = rec.at("type").get<std::string>();
      if (type == "user") {
        ds.add_user({rec.at("id").get<std::string>(), rec.value("name", "")});
      } else if (type == "item") {
        ds.add_item({rec.at("id").get<std::string>(), rec.value("title", ""), rec.value("domain", "")});
      } else if (type == "review") {
        RawReview r;
        r.user_id = rec.at("user").get<std::string>();
        r.item_id = rec.at("item").get<std::string>();
        r.rating = rec.at("rating").get<int>();
        r.timestamp = rec.value("ts", std::int64_t{0});
        r.review_text = rec.value("review", "");
        r.summary = rec.value("summary", "");
        if (rec.contains("feature")) r.feature_word = rec.at("feature").get<std::string>();
        if (rec.contains("explanation")) r.explanation = rec.at("explanation").get<std::string>();
        ds.add_review(std::move(r));
      } else {
        throw DataError("unknown record type '" + type + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      throw DataError("dataset line " + std::to_string(line_no) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError("dataset line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return ds;
}

Dataset read_dataset_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset file " + path.string());
  return read_dataset(in);
}

void write_dataset(std::ostream& out, const Dataset& dataset) {
  out << nlohmann::json{{"format", kFormat}, {"version", kVersion}, {"name", dataset.name}}.dump() << "\n";
  for (const auto& u : dataset.users()) {
    nlohmann::json j{{"type", "user"}, {"id", u.id}};
    if (!u.name.empty()) j["name"] = u.name;
    out << j.dump() << "\n";
  }
  for (const auto& i : dataset.items()) {
    nlohmann::json j{{"type", "item"}, {"id", i.id}};
    if (!i.title.empty()) j["title"] = i.title;
    if (!i.domain.empty()) j["domain"] = i.domain;
    out << j.dump() << "\n";
  }
  for (const auto& r : dataset.reviews()) {
    nlohmann::json j{{"type", "review"}, {"user", r.user_id}, {"item", r.item_id}, {"rating", r.rating},
                     {"ts", r.timestamp}, {"review", r.review_text}, {"summary", r.summary}};
    if (r.feature_word) j["feature"] = *r.feature_word;
    if (r.explanation) j["explanation"] = *r.explanation;
    out << j.dump() << "\n";
  }
}

void write_dataset_file(const std::filesystem::path& path, const Dataset& dataset) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write dataset file " + path.string());
  write_dataset(out, dataset);
}

}  // namespace p5rec::data
