#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "iclkit/captions.hpp"
#include "iclkit/segmentation.hpp"

namespace iclkit {

struct AssignedCaption {
  std::string text;
  CaptionSource source;
};

AssignedCaption assign_fhl(const std::string& image_id, const CaptionDataset& dataset);
AssignedCaption assign_mgc(const std::string& image_id, CaptionSource tier, const CaptionDataset& dataset);

enum class MhlMode { Maximize, Minimize };

// Human caption with the highest (or lowest) sentence-level CIDEr-D against
// the image's `anchor_tier` machine caption. Each human caption is scored
// as the candidate with the machine caption as sole reference; document
// frequencies come from the image's human captions, one document each.
// Ties go to the lowest caption index.
AssignedCaption assign_mhl(const std::string& image_id, CaptionSource anchor_tier, const CaptionDataset& dataset,
                           MhlMode mode);

// Machine tier an MHL-style source is anchored on unless overridden:
// MHL_TF and INV_MHL_TF use MGC_TF_135, MHL_LMM uses MGC_LMM_32.
CaptionSource default_mhl_anchor(CaptionSource source);

// Dispatches on `source`. `mhl_anchor` overrides the default anchor tier.
AssignedCaption assign_caption(const std::string& image_id, CaptionSource source, const CaptionDataset& dataset,
                               std::optional<CaptionSource> mhl_anchor = std::nullopt);

// Strips surrounding whitespace and collapses trailing periods so the text
// ends in exactly one '.'. Case is preserved. Throws DataError if nothing
// but whitespace and periods remains.
std::string normalize_caption(std::string_view caption);

struct IceItem {
  std::string image_id;
  std::string caption;
  CaptionSource source = CaptionSource::FHL;
  double score = 0.0;  // retrieval score, 0 for RS

  friend bool operator==(const IceItem&, const IceItem&) = default;
};

struct DemoSequence {
  std::vector<IceItem> ices;
  std::string query_image_id;

  std::size_t shot_count() const { return ices.size(); }
};

// Rendering pieces. `prefix` must contain {bos}; `item` must contain
// {image}, {caption} and {delimiter} once each; `query` must contain
// {image} followed by {cue}. Literal text between placeholders takes the
// role of its piece: BOS in the prefix, context inside an item, query in
// the query piece.
struct PromptTemplate {
  std::string prefix = "{bos}";
  std::string item = "{image}{caption}{delimiter}";
  std::string query = "{image}{cue}";
  std::string bos = "<BOS>";
  std::string image = "<image>";
  std::string delimiter = "<endofchunk>";
  std::string cue = "Caption:";

  void validate() const;
};

PromptTemplate prompt_template_from_json(const nlohmann::json& doc);
nlohmann::json prompt_template_to_json(const PromptTemplate& tmpl);

// Byte range [begin, end) of the rendered prompt carrying one role.
struct RoleSpan {
  Role role;
  std::optional<std::size_t> ice_index;
  std::size_t begin = 0;
  std::size_t end = 0;

  friend bool operator==(const RoleSpan&, const RoleSpan&) = default;
};

struct BuiltSequence {
  DemoSequence sequence;
  std::string prompt;
  // Query-side spans come last: the query image marker (IMAGE_MARK, no ICE)
  // then the cue (QUERY). A tokenizer-aware consumer labels the final two
  // tokens as the query set.
  std::vector<RoleSpan> layout;
};

BuiltSequence build_sequence(std::vector<IceItem> ices, const std::string& query_image_id,
                             const PromptTemplate& tmpl = {});

// Token segmentation under a simple tokenizer: each marker and each period
// is one token, other text splits into words and single punctuation
// characters. The final two tokens become QUERY. Used for synthetic runs
// and tests; real runs take their segmentation from the exporter.
TokenSegmentation layout_segmentation(const BuiltSequence& built);

nlohmann::json layout_to_json(const std::vector<RoleSpan>& layout);

}  // namespace iclkit
