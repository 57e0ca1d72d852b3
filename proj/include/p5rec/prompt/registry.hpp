#pragma once

#include <compare>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace p5rec::prompt {

enum class TaskFamily { rating = 1, sequential = 2, explanation = 3, review = 4, direct = 5 };

inline constexpr TaskFamily kAllFamilies[] = {TaskFamily::rating, TaskFamily::sequential,
                                              TaskFamily::explanation, TaskFamily::review,
                                              TaskFamily::direct};

std::string_view family_name(TaskFamily family);
std::optional<TaskFamily> parse_family(std::string_view name);

/// Prompt identifier of the form "F-N", e.g. "2-13".
struct PromptId {
  int family = 0;
  int index = 0;

  static PromptId parse(std::string_view text);
  std::string str() const;

  auto operator<=>(const PromptId&) const = default;
};

/// One piece of a compiled template: literal text or a field reference.
struct Segment {
  bool is_field = false;
  std::string text;
};

struct PromptTemplate {
  PromptId id;
  TaskFamily family = TaskFamily::rating;
  int category = 1;
  std::string input_template;
  std::string target_template;
  std::set<std::string> required_fields;
};

/// Values bound to template fields. List-valued fields are joined with their
/// own separator at render time.
class FieldBindings {
 public:
  void set(std::string name, std::string value);
  void set_list(std::string name, std::vector<std::string> values, std::string separator = ", ");

  bool contains(std::string_view name) const;
  /// Rendered text for a field; throws RegistryError when unbound.
  std::string value(std::string_view name) const;
  std::set<std::string> names() const;

 private:
  struct ListValue {
    std::vector<std::string> items;
    std::string separator;
  };
  std::map<std::string, std::variant<std::string, ListValue>, std::less<>> values_;
};

struct RenderedPrompt {
  std::string input_text;
  std::string target_text;
};

class Registry {
 public:
  Registry() = default;
  explicit Registry(std::vector<PromptTemplate> templates);

  std::size_t size() const { return templates_.size(); }
  bool empty() const { return templates_.empty(); }
  const std::vector<PromptTemplate>& templates() const { return templates_; }

  const PromptTemplate* find(const PromptId& id) const;
  const PromptTemplate& at(const PromptId& id) const;
  std::vector<const PromptTemplate*> by_family(TaskFamily family) const;
  std::set<PromptId> ids() const;

 private:
  std::vector<PromptTemplate> templates_;  // sorted by id
};

/// Splits a template string into literal and field segments. `{{` and `}}`
/// are literal braces; `{name}` is a field. Throws RegistryError on
/// malformed braces.
std::vector<Segment> compile_template(std::string_view text);
std::set<std::string> template_fields(std::string_view text);

/// Parses the registry text format. The document must carry a
/// `format = p5rec-registry/1` line before the first record.
Registry load_registry(std::string_view document);
Registry load_registry_file(const std::filesystem::path& path);
std::string serialize_registry(const Registry& registry);

/// Substitutes every field of both templates.
RenderedPrompt render(const PromptTemplate& tmpl, const FieldBindings& bindings);
std::string render_text(std::string_view tmpl, const FieldBindings& bindings);

struct HoldoutPolicy {
  enum class Kind { last_per_family, explicit_pretrain, explicit_zeroshot };
  Kind kind = Kind::last_per_family;
  std::set<PromptId> ids;

  static HoldoutPolicy last() { return {}; }
  static HoldoutPolicy pretrain_only(std::set<PromptId> ids) {
    return {Kind::explicit_pretrain, std::move(ids)};
  }
  static HoldoutPolicy zeroshot_only(std::set<PromptId> ids) {
    return {Kind::explicit_zeroshot, std::move(ids)};
  }
  /// The 18-prompt reduced pretraining collection.
  static HoldoutPolicy prompt_scaling();
  /// Parses "last", "ids=1-10,2-13" (held-out ids) or "pretrain=1-5,...".
  static HoldoutPolicy parse(std::string_view text);
};

struct RegistrySplit {
  std::set<PromptId> pretrain_ids;
  std::set<PromptId> zeroshot_ids;

  bool is_pretrain(const PromptId& id) const { return pretrain_ids.count(id) > 0; }
  bool is_zeroshot(const PromptId& id) const { return zeroshot_ids.count(id) > 0; }
};

RegistrySplit split_registry(const Registry& registry, const HoldoutPolicy& policy);

/// Text of the bundled 47-template collection.
std::string_view default_registry_text();
const Registry& default_registry();

}  // namespace p5rec::prompt
