#include "p5rec/prompt/registry.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "p5rec/common.hpp"

namespace p5rec::prompt {

namespace {

constexpr std::string_view kFormatTag = "p5rec-registry/1";

bool is_field_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_';
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

int parse_int(std::string_view s, std::string_view what) {
  int value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw RegistryError("invalid " + std::string(what) + ": '" + std::string(s) + "'");
  }
  return value;
}

}  // namespace

std::string_view family_name(TaskFamily family) {
  switch (family) {
    case TaskFamily::rating: return "rating";
    case TaskFamily::sequential: return "sequential";
    case TaskFamily::explanation: return "explanation";
    case TaskFamily::review: return "review";
    case TaskFamily::direct: return "direct";
  }
  return "unknown";
}

std::optional<TaskFamily> parse_family(std::string_view name) {
  for (auto f : kAllFamilies) {
    if (family_name(f) == name) return f;
  }
  return std::nullopt;
}

PromptId PromptId::parse(std::string_view text) {
  text = trim(text);
  auto dash = text.find('-');
  if (dash == std::string_view::npos) {
    throw RegistryError("malformed prompt id '" + std::string(text) + "'");
  }
  PromptId id{parse_int(text.substr(0, dash), "prompt family"),
              parse_int(text.substr(dash + 1), "prompt index")};
  if (id.index < 1) throw RegistryError("prompt index must be >= 1 in '" + std::string(text) + "'");
  return id;
}

std::string PromptId::str() const { return std::to_string(family) + "-" + std::to_string(index); }

// --- bindings -------------------------------------------------------------

void FieldBindings::set(std::string name, std::string value) {
  values_.insert_or_assign(std::move(name), std::move(value));
}

void FieldBindings::set_list(std::string name, std::vector<std::string> values,
                             std::string separator) {
  values_.insert_or_assign(std::move(name), ListValue{std::move(values), std::move(separator)});
}

bool FieldBindings::contains(std::string_view name) const { return values_.find(name) != values_.end(); }

std::string FieldBindings::value(std::string_view name) const {
  auto it = values_.find(name);
  if (it == values_.end()) throw RegistryError("missing binding for field '" + std::string(name) + "'");
  if (const auto* s = std::get_if<std::string>(&it->second)) return *s;
  const auto& list = std::get<ListValue>(it->second);
  std::string out;
  for (std::size_t i = 0; i < list.items.size(); ++i) {
    if (i > 0) out += list.separator;
    out += list.items[i];
  }
  return out;
}

std::set<std::string> FieldBindings::names() const {
  std::set<std::string> out;
  for (const auto& [k, v] : values_) out.insert(k);
  return out;
}

// --- templates ------------------------------------------------------------

std::vector<Segment> compile_template(std::string_view text) {
  std::vector<Segment> out;
  std::string literal;
  auto flush = [&] {
    if (!literal.empty()) out.push_back({false, std::move(literal)});
    literal.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (c == '{') {
      if (i + 1 < text.size() && text[i + 1] == '{') {
        literal += '{';
        ++i;
        continue;
      }
      auto close = text.find('}', i + 1);
      if (close == std::string_view::npos) throw RegistryError("unterminated placeholder in '" + std::string(text) + "'");
      auto name = text.substr(i + 1, close - i - 1);
      if (name.empty() || !std::all_of(name.begin(), name.end(), is_field_char)) {
        throw RegistryError("invalid placeholder '{" + std::string(name) + "}'");
      }
      flush();
      out.push_back({true, std::string(name)});
      i = close;
    } else if (c == '}') {
      if (i + 1 < text.size() && text[i + 1] == '}') {
        literal += '}';
        ++i;
        continue;
      }
      throw RegistryError("unbalanced '}' in '" + std::string(text) + "'");
    } else {
      literal += c;
    }
  }
  flush();
  return out;
}

std::set<std::string> template_fields(std::string_view text) {
  std::set<std::string> out;
  for (const auto& seg : compile_template(text)) {
    if (seg.is_field) out.insert(seg.text);
  }
  return out;
}

std::string render_text(std::string_view tmpl, const FieldBindings& bindings) {
  std::string out;
  for (const auto& seg : compile_template(tmpl)) {
    out += seg.is_field ? bindings.value(seg.text) : seg.text;
  }
  return out;
}

RenderedPrompt render(const PromptTemplate& tmpl, const FieldBindings& bindings) {
  for (const auto& field : tmpl.required_fields) {
    if (!bindings.contains(field)) {
      throw RegistryError("prompt " + tmpl.id.str() + ": missing binding for field '" + field + "'");
    }
  }
  return {render_text(tmpl.input_template, bindings), render_text(tmpl.target_template, bindings)};
}

// --- registry -------------------------------------------------------------

Registry::Registry(std::vector<PromptTemplate> templates) : templates_(std::move(templates)) {
  std::sort(templates_.begin(), templates_.end(),
            [](const auto& a, const auto& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < templates_.size(); ++i) {
    const auto& t = templates_[i];
    if (i > 0 && templates_[i - 1].id == t.id) throw RegistryError("duplicate prompt id " + t.id.str());
    if (t.id.family != static_cast<int>(t.family)) {
      throw RegistryError("prompt " + t.id.str() + ": id family digit does not match family '" +
                          std::string(family_name(t.family)) + "'");
    }
    if (t.category < 1) throw RegistryError("prompt " + t.id.str() + ": category must be >= 1");
    if (t.target_template.empty()) throw RegistryError("prompt " + t.id.str() + ": empty target template");
    std::set<std::string> used;
    try {
      used = template_fields(t.input_template);
      auto target_used = template_fields(t.target_template);
      used.insert(target_used.begin(), target_used.end());
    } catch (const RegistryError& e) {
      throw RegistryError("prompt " + t.id.str() + ": " + e.what());
    }
    for (const auto& f : used) {
      if (!t.required_fields.count(f)) {
        throw RegistryError("prompt " + t.id.str() + ": placeholder {" + f + "} not listed in fields");
      }
    }
    for (const auto& f : t.required_fields) {
      if (!used.count(f)) {
        throw RegistryError("prompt " + t.id.str() + ": field '" + f + "' listed but never used");
      }
    }
  }
}

const PromptTemplate* Registry::find(const PromptId& id) const {
  auto it = std::lower_bound(templates_.begin(), templates_.end(), id,
                             [](const auto& t, const PromptId& v) { return t.id < v; });
  return (it != templates_.end() && it->id == id) ? &*it : nullptr;
}

const PromptTemplate& Registry::at(const PromptId& id) const {
  if (const auto* t = find(id)) return *t;
  throw RegistryError("unknown prompt id " + id.str());
}

std::vector<const PromptTemplate*> Registry::by_family(TaskFamily family) const {
  std::vector<const PromptTemplate*> out;
  for (const auto& t : templates_) {
    if (t.family == family) out.push_back(&t);
  }
  return out;
}

std::set<PromptId> Registry::ids() const {
  std::set<PromptId> out;
  for (const auto& t : templates_) out.insert(t.id);
  return out;
}

// --- file format ----------------------------------------------------------

Registry load_registry(std::string_view document) {
  std::vector<PromptTemplate> templates;
  bool format_seen = false;

  struct Pending {
    std::string id_text;
    std::map<std::string, std::string> kv;
  };
  std::optional<Pending> current;

  auto finish = [&] {
    if (!current) return;
    const auto& kv = current->kv;
    const std::string& idt = current->id_text;
    auto get = [&](const char* key) -> const std::string& {
      auto it = kv.find(key);
      if (it == kv.end()) throw RegistryError("prompt " + idt + ": missing key '" + key + "'");
      return it->second;
    };
    PromptTemplate t;
    try {
      t.id = PromptId::parse(idt);
    } catch (const RegistryError& e) {
      throw RegistryError("prompt " + idt + ": " + e.what());
    }
    auto fam = parse_family(get("family"));
    if (!fam) throw RegistryError("prompt " + idt + ": unknown family '" + get("family") + "'");
    t.family = *fam;
    try {
      t.category = parse_int(get("category"), "category");
    } catch (const RegistryError& e) {
      throw RegistryError("prompt " + idt + ": " + e.what());
    }
    t.input_template = get("input");
    t.target_template = get("target");
    std::string_view fields = get("fields");
    while (!fields.empty()) {
      auto comma = fields.find(',');
      auto name = trim(fields.substr(0, comma));
      if (!name.empty()) t.required_fields.emplace(name);
      if (comma == std::string_view::npos) break;
      fields.remove_prefix(comma + 1);
    }
    for (const auto& existing : templates) {
      if (existing.id == t.id) throw RegistryError("duplicate prompt id " + t.id.str());
    }
    templates.push_back(std::move(t));
    current.reset();
  };

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= document.size()) {
    auto end = document.find('\n', pos);
    if (end == std::string_view::npos) end = document.size();
    std::string_view line = document.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    auto t = trim(line);
    if (t.empty() || t.front() == '#') {
      if (end == document.size()) break;
      continue;
    }
    if (t.front() == '[') {
      if (t.back() != ']') throw RegistryError("line " + std::to_string(line_no) + ": malformed record header");
      if (!format_seen) throw RegistryError("registry document lacks a format tag before first record");
      finish();
      current = Pending{std::string(trim(t.substr(1, t.size() - 2))), {}};
    } else {
      auto eq = line.find('=');
      if (eq == std::string_view::npos) {
        throw RegistryError("line " + std::to_string(line_no) + ": expected key = value");
      }
      std::string key(trim(line.substr(0, eq)));
      std::string value(trim(line.substr(eq + 1)));
      if (!current) {
        if (key != "format") throw RegistryError("line " + std::to_string(line_no) + ": key outside record");
        if (value != kFormatTag) throw RegistryError("unsupported registry format '" + value + "'");
        format_seen = true;
      } else {
        if (current->kv.count(key)) {
          throw RegistryError("prompt " + current->id_text + ": repeated key '" + key + "'");
        }
        current->kv.emplace(std::move(key), std::move(value));
      }
    }
    if (end == document.size()) break;
  }
  finish();
  return Registry(std::move(templates));
}

Registry load_registry_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RegistryError("cannot open registry file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return load_registry(ss.str());
}

std::string serialize_registry(const Registry& registry) {
  std::ostringstream out;
  out << "format = " << kFormatTag << "\n";
  for (const auto& t : registry.templates()) {
    out << "\n[" << t.id.str() << "]\n";
    out << "family = " << family_name(t.family) << "\n";
    out << "category = " << t.category << "\n";
    out << "fields = ";
    bool first = true;
    for (const auto& f : t.required_fields) {
      out << (first ? "" : ", ") << f;
      first = false;
    }
    out << "\ninput = " << t.input_template << "\n";
    out << "target = " << t.target_template << "\n";
  }
  return out.str();
}

// --- splits ---------------------------------------------------------------

HoldoutPolicy HoldoutPolicy::prompt_scaling() {
  std::set<PromptId> ids;
  for (const char* s : {"1-5", "1-6", "1-8", "1-9", "2-1", "2-3", "2-8", "2-11", "3-2", "3-3", "3-6",
                        "3-9", "4-1", "4-2", "4-3", "5-2", "5-5", "5-7"}) {
    ids.insert(PromptId::parse(s));
  }
  return pretrain_only(std::move(ids));
}

HoldoutPolicy HoldoutPolicy::parse(std::string_view text) {
  text = trim(text);
  if (text == "last") return last();
  if (text == "prompt-scaling") return prompt_scaling();
  auto eq = text.find('=');
  if (eq == std::string_view::npos) throw RegistryError("unknown holdout policy '" + std::string(text) + "'");
  auto kind = trim(text.substr(0, eq));
  std::set<PromptId> ids;
  std::string_view rest = text.substr(eq + 1);
  while (!rest.empty()) {
    auto comma = rest.find(',');
    auto item = trim(rest.substr(0, comma));
    if (!item.empty()) ids.insert(PromptId::parse(item));
    if (comma == std::string_view::npos) break;
    rest.remove_prefix(comma + 1);
  }
  if (kind == "ids") return zeroshot_only(std::move(ids));
  if (kind == "pretrain") return pretrain_only(std::move(ids));
  throw RegistryError("unknown holdout policy '" + std::string(text) + "'");
}

RegistrySplit split_registry(const Registry& registry, const HoldoutPolicy& policy) {
  RegistrySplit split;
  const auto all = registry.ids();
  switch (policy.kind) {
    case HoldoutPolicy::Kind::last_per_family: {
      for (auto family : kAllFamilies) {
        auto members = registry.by_family(family);
        if (members.empty()) continue;
        if (members.size() < 2) {
          throw RegistryError("family '" + std::string(family_name(family)) +
                              "' has a single template; cannot hold out its last prompt");
        }
        split.zeroshot_ids.insert(members.back()->id);
      }
      break;
    }
    case HoldoutPolicy::Kind::explicit_pretrain:
    case HoldoutPolicy::Kind::explicit_zeroshot: {
      for (const auto& id : policy.ids) {
        if (!all.count(id)) throw RegistryError("holdout policy names unknown prompt " + id.str());
      }
      if (policy.kind == HoldoutPolicy::Kind::explicit_zeroshot) {
        split.zeroshot_ids = policy.ids;
      } else {
        for (const auto& id : all) {
          if (!policy.ids.count(id)) split.zeroshot_ids.insert(id);
        }
      }
      break;
    }
  }
  for (const auto& id : all) {
    if (!split.zeroshot_ids.count(id)) split.pretrain_ids.insert(id);
  }
  return split;
}

}  // namespace p5rec::prompt
