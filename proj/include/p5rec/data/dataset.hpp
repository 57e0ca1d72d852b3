#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace p5rec::data {

struct UserInfo {
  std::string id;
  std::string name;  // optional display name; empty when unknown
};

struct ItemInfo {
  std::string id;
  std::string title;
  std::string domain;
};

struct RawReview {
  std::string user_id;
  std::string item_id;
  int rating = 0;
  std::string review_text;
  std::string summary;
  std::optional<std::string> feature_word;
  std::optional<std::string> explanation;
  std::int64_t timestamp = 0;
};

/// Items of one user ordered by interaction time.
struct InteractionSequence {
  std::string user_id;
  std::vector<std::string> items;
};

/// Users, items and reviews of one corpus. Reviews referencing unknown
/// users or items register them with empty metadata.
class Dataset {
 public:
  std::string name = "dataset";

  void add_user(UserInfo user);
  void add_item(ItemInfo item);
  /// Validates rating range and ids; throws DataError.
  void add_review(RawReview review);

  const std::vector<UserInfo>& users() const { return users_; }
  const std::vector<ItemInfo>& items() const { return items_; }
  const std::vector<RawReview>& reviews() const { return reviews_; }

  const UserInfo& user(const std::string& id) const;
  const ItemInfo& item(const std::string& id) const;
  bool has_item(const std::string& id) const { return item_index_.count(id) > 0; }
  bool has_user(const std::string& id) const { return user_index_.count(id) > 0; }

  /// User name when known, else "user_<id>".
  std::string user_description(const std::string& id) const;
  std::vector<std::string> item_ids() const;
  std::vector<std::string> user_ids() const;

  /// Per-user sequences sorted by timestamp (stable for ties), in user order.
  std::vector<InteractionSequence> sequences() const;
  /// Every item each user has interacted with.
  std::map<std::string, std::set<std::string>> interactions() const;

  /// Copy restricted to items of `domain` and the reviews touching them.
  Dataset subset_domain(const std::string& domain) const;

 private:
  std::vector<UserInfo> users_;
  std::vector<ItemInfo> items_;
  std::vector<RawReview> reviews_;
  std::map<std::string, std::size_t> user_index_;
  std::map<std::string, std::size_t> item_index_;
};

struct DatasetStats {
  std::size_t users = 0;
  std::size_t items = 0;
  std::size_t reviews = 0;
  double sparsity_percent = 0.0;  // reviews / (users * items) * 100
};

DatasetStats dataset_stats(const Dataset& dataset);

/// Users with reviews in both domains, and the target-domain footprint of
/// those users.
struct TransferStats {
  std::size_t shared_users = 0;
  std::size_t target_items = 0;
  std::size_t target_reviews = 0;
};

TransferStats transfer_stats(const Dataset& source, const Dataset& target);

/// Line-delimited JSON: a header line {"format":"p5rec-raw","version":1}
/// followed by user, item and review records.
Dataset read_dataset(std::istream& in);
Dataset read_dataset_file(const std::filesystem::path& path);
void write_dataset(std::ostream& out, const Dataset& dataset);
void write_dataset_file(const std::filesystem::path& path, const Dataset& dataset);

}  // namespace p5rec::data
