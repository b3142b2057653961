#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace iclkit {

// Where an in-context caption came from. MGC_* tiers are stored machine
// captions; MHL_* pick the human caption closest to a machine tier and
// INV_MHL_TF picks the farthest.
enum class CaptionSource {
  FHL,
  MGC_TF_60,
  MGC_TF_80,
  MGC_TF_135,
  MGC_LMM_0,
  MGC_LMM_32,
  MHL_TF,
  MHL_LMM,
  INV_MHL_TF,
};

std::string_view source_name(CaptionSource s);
CaptionSource source_from_name(std::string_view name);
bool is_machine_tier(CaptionSource s);

struct ImageCaptions {
  std::vector<std::string> human_captions;
  std::map<CaptionSource, std::string> machine_captions;
  std::optional<std::set<std::string>> gt_objects;
};

class CaptionDataset {
 public:
  CaptionDataset() = default;
  explicit CaptionDataset(std::map<std::string, ImageCaptions> images) : images_(std::move(images)) {}

  // Throws DataError for unknown ids.
  const ImageCaptions& at(const std::string& image_id) const;
  bool contains(const std::string& image_id) const { return images_.contains(image_id); }
  const std::map<std::string, ImageCaptions>& images() const { return images_; }
  std::size_t size() const { return images_.size(); }

 private:
  std::map<std::string, ImageCaptions> images_;
};

// {images: [{id, human_captions: [...], machine_captions: {tier: text}, gt_objects: [...]}]}
CaptionDataset caption_dataset_from_json(const nlohmann::json& doc);
CaptionDataset load_caption_dataset(const std::filesystem::path& path);

}  // namespace iclkit
