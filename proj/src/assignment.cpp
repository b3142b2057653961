#include "iclkit/assignment.hpp"

#include <algorithm>
#include <cctype>
#include <nlohmann/json.hpp>
#include <set>

#include "iclkit/errors.hpp"
#include "iclkit/text_metrics.hpp"

namespace iclkit {

using nlohmann::json;

AssignedCaption assign_fhl(const std::string& image_id, const CaptionDataset& dataset) {
  const auto& caps = dataset.at(image_id);
  if (caps.human_captions.empty()) throw DataError("image '" + image_id + "' has no human captions");
  return {caps.human_captions.front(), CaptionSource::FHL};
}

AssignedCaption assign_mgc(const std::string& image_id, CaptionSource tier, const CaptionDataset& dataset) {
  if (!is_machine_tier(tier)) {
    throw DataError(std::string(source_name(tier)) + " is not a machine caption tier");
  }
  const auto& caps = dataset.at(image_id);
  auto it = caps.machine_captions.find(tier);
  if (it == caps.machine_captions.end()) {
    throw DataError("image '" + image_id + "' has no " + std::string(source_name(tier)) + " caption");
  }
  return {it->second, tier};
}

namespace {

CaptionSource mhl_source(CaptionSource anchor_tier, MhlMode mode) {
  const bool lmm = anchor_tier == CaptionSource::MGC_LMM_0 || anchor_tier == CaptionSource::MGC_LMM_32;
  if (mode == MhlMode::Minimize) return CaptionSource::INV_MHL_TF;
  return lmm ? CaptionSource::MHL_LMM : CaptionSource::MHL_TF;
}

}  // namespace

AssignedCaption assign_mhl(const std::string& image_id, CaptionSource anchor_tier, const CaptionDataset& dataset,
                           MhlMode mode) {
  const auto& caps = dataset.at(image_id);
  if (caps.human_captions.empty()) throw DataError("image '" + image_id + "' has no human captions");
  const std::string machine = assign_mgc(image_id, anchor_tier, dataset).text;

  std::vector<std::vector<std::string>> docs;
  for (const auto& h : caps.human_captions) docs.push_back({h});
  const auto df = DocumentFrequency::from_documents(docs);
  const std::vector<std::string> refs{machine};

  std::size_t best = 0;
  double best_score = 0.0;
  for (std::size_t i = 0; i < caps.human_captions.size(); ++i) {
    const double score = cider(caps.human_captions[i], refs, df).value;
    const bool better = mode == MhlMode::Maximize ? score > best_score : score < best_score;
    if (i == 0 || better) {
      best = i;
      best_score = score;
    }
  }
  return {caps.human_captions[best], mhl_source(anchor_tier, mode)};
}

CaptionSource default_mhl_anchor(CaptionSource source) {
  switch (source) {
    case CaptionSource::MHL_TF:
    case CaptionSource::INV_MHL_TF:
      return CaptionSource::MGC_TF_135;
    case CaptionSource::MHL_LMM:
      return CaptionSource::MGC_LMM_32;
    default:
      throw DataError(std::string(source_name(source)) + " is not a model-guided source");
  }
}

AssignedCaption assign_caption(const std::string& image_id, CaptionSource source, const CaptionDataset& dataset,
                               std::optional<CaptionSource> mhl_anchor) {
  switch (source) {
    case CaptionSource::FHL:
      return assign_fhl(image_id, dataset);
    case CaptionSource::MHL_TF:
    case CaptionSource::MHL_LMM:
    case CaptionSource::INV_MHL_TF: {
      const auto anchor = mhl_anchor.value_or(default_mhl_anchor(source));
      const auto mode = source == CaptionSource::INV_MHL_TF ? MhlMode::Minimize : MhlMode::Maximize;
      auto out = assign_mhl(image_id, anchor, dataset, mode);
      out.source = source;
      return out;
    }
    default:
      return assign_mgc(image_id, source, dataset);
  }
}

std::string normalize_caption(std::string_view caption) {
  auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  std::size_t begin = 0, end = caption.size();
  while (begin < end && is_space(caption[begin])) ++begin;
  while (end > begin && (is_space(caption[end - 1]) || caption[end - 1] == '.')) --end;
  if (begin == end) throw DataError("caption '" + std::string(caption) + "' is empty after normalization");
  std::string out(caption.substr(begin, end - begin));
  out += '.';
  return out;
}

// ------------------------------------------------------------------ prompts

namespace {

std::size_t count_of(std::string_view text, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string_view::npos; pos = text.find(needle, pos + needle.size())) {
    ++n;
  }
  return n;
}

struct Renderer {
  std::string text;
  std::vector<RoleSpan> spans;

  void emit(Role role, std::optional<std::size_t> ice, std::string_view piece) {
    if (piece.empty()) return;
    spans.push_back({role, ice, text.size(), text.size() + piece.size()});
    text += piece;
  }
};

// Expands one template piece, dispatching placeholders to `on_placeholder`
// and literal runs to `on_literal`.
template <typename Placeholder, typename Literal>
void expand(std::string_view pattern, Placeholder on_placeholder, Literal on_literal) {
  std::size_t pos = 0;
  while (pos < pattern.size()) {
    const auto open = pattern.find('{', pos);
    if (open == std::string_view::npos) {
      on_literal(pattern.substr(pos));
      return;
    }
    if (open > pos) on_literal(pattern.substr(pos, open - pos));
    const auto close = pattern.find('}', open);
    if (close == std::string_view::npos) throw ConfigError("unterminated placeholder in prompt template");
    on_placeholder(pattern.substr(open + 1, close - open - 1));
    pos = close + 1;
  }
}

}  // namespace

void PromptTemplate::validate() const {
  auto require = [](std::string_view piece, std::string_view name, std::string_view placeholder) {
    if (count_of(piece, placeholder) != 1) {
      throw ConfigError("prompt template " + std::string(name) + " must contain " + std::string(placeholder) +
                        " exactly once");
    }
  };
  require(prefix, "prefix", "{bos}");
  require(item, "item", "{image}");
  require(item, "item", "{caption}");
  require(item, "item", "{delimiter}");
  require(query, "query", "{image}");
  require(query, "query", "{cue}");
  if (query.find("{image}") > query.find("{cue}")) throw ConfigError("prompt template query must place {image} before {cue}");
  const std::set<std::string_view> known{"bos", "image", "caption", "delimiter", "cue"};
  for (std::string_view piece : {std::string_view(prefix), std::string_view(item), std::string_view(query)}) {
    expand(
        piece,
        [&](std::string_view name) {
          if (!known.contains(name)) throw ConfigError("unknown prompt placeholder {" + std::string(name) + "}");
        },
        [](std::string_view) {});
  }
}

PromptTemplate prompt_template_from_json(const json& doc) {
  PromptTemplate t;
  t.prefix = doc.value("prefix", t.prefix);
  t.item = doc.value("item", t.item);
  t.query = doc.value("query", t.query);
  t.bos = doc.value("bos", t.bos);
  t.image = doc.value("image", t.image);
  t.delimiter = doc.value("delimiter", t.delimiter);
  t.cue = doc.value("cue", t.cue);
  t.validate();
  return t;
}

json prompt_template_to_json(const PromptTemplate& t) {
  return {{"prefix", t.prefix}, {"item", t.item}, {"query", t.query}, {"bos", t.bos},
          {"image", t.image},   {"delimiter", t.delimiter},         {"cue", t.cue}};
}

BuiltSequence build_sequence(std::vector<IceItem> ices, const std::string& query_image_id,
                             const PromptTemplate& tmpl) {
  if (ices.empty()) throw DomainError("build_sequence: no in-context examples");
  tmpl.validate();
  for (const auto& ice : ices) {
    if (ice.image_id == query_image_id) {
      throw DomainError("build_sequence: query image '" + query_image_id + "' also appears as an ICE");
    }
  }

  Renderer r;
  expand(
      tmpl.prefix, [&](std::string_view) { r.emit(Role::Bos, std::nullopt, tmpl.bos); },
      [&](std::string_view lit) { r.emit(Role::Bos, std::nullopt, lit); });

  for (std::size_t k = 0; k < ices.size(); ++k) {
    ices[k].caption = normalize_caption(ices[k].caption);
    const std::string& caption = ices[k].caption;
    expand(
        tmpl.item,
        [&](std::string_view name) {
          if (name == "image") {
            r.emit(Role::ImageMark, k, tmpl.image);
          } else if (name == "delimiter") {
            r.emit(Role::Delim, k, tmpl.delimiter);
          } else {
            r.emit(Role::ContextText, k, std::string_view(caption).substr(0, caption.size() - 1));
            r.emit(Role::Period, k, ".");
          }
        },
        [&](std::string_view lit) { r.emit(Role::ContextText, k, lit); });
  }

  expand(
      tmpl.query,
      [&](std::string_view name) {
        if (name == "image") {
          r.emit(Role::ImageMark, std::nullopt, tmpl.image);
        } else {
          r.emit(Role::Query, std::nullopt, tmpl.cue);
        }
      },
      [&](std::string_view lit) { r.emit(Role::Query, std::nullopt, lit); });

  return {DemoSequence{std::move(ices), query_image_id}, std::move(r.text), std::move(r.spans)};
}

TokenSegmentation layout_segmentation(const BuiltSequence& built) {
  std::vector<TokenLabel> labels;
  for (const auto& span : built.layout) {
    const TokenLabel label{span.role, span.ice_index};
    if (span.role != Role::ContextText && span.role != Role::Query) {
      labels.push_back(label);
      continue;
    }
    const std::string_view text = std::string_view(built.prompt).substr(span.begin, span.end - span.begin);
    bool in_word = false;
    for (const char ch : text) {
      const auto c = static_cast<unsigned char>(ch);
      if (std::isalnum(c) || c >= 0x80) {
        if (!in_word) labels.push_back(label);
        in_word = true;
      } else {
        in_word = false;
        if (!std::isspace(c)) labels.push_back(label);
      }
    }
  }
  if (labels.size() < 2) throw DataError("layout has fewer than two tokens");
  const auto cue_tokens = std::count_if(labels.begin(), labels.end(), [](const TokenLabel& l) { return l.role == Role::Query; });
  if (cue_tokens > 2) {
    throw DataError("prompt cue splits into " + std::to_string(cue_tokens) + " tokens; the query set must be two tokens");
  }
  for (std::size_t i = labels.size() - 2; i < labels.size(); ++i) labels[i] = {Role::Query, std::nullopt};
  return TokenSegmentation(std::move(labels));
}

json layout_to_json(const std::vector<RoleSpan>& layout) {
  auto out = json::array();
  for (const auto& s : layout) {
    out.push_back({{"role", role_name(s.role)},
                   {"ice_index", s.ice_index ? json(*s.ice_index) : json(nullptr)},
                   {"begin", s.begin},
                   {"end", s.end}});
  }
  return out;
}

}  // namespace iclkit
