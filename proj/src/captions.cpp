#include "iclkit/captions.hpp"

#include <nlohmann/json.hpp>

#include "iclkit/errors.hpp"
#include "iclkit/interchange.hpp"

namespace iclkit {

using nlohmann::json;

namespace {

constexpr std::string_view kSourceNames[] = {"FHL",       "MGC_TF_60",  "MGC_TF_80", "MGC_TF_135", "MGC_LMM_0",
                                             "MGC_LMM_32", "MHL_TF",    "MHL_LMM",   "INV_MHL_TF"};

}  // namespace

std::string_view source_name(CaptionSource s) { return kSourceNames[static_cast<int>(s)]; }

CaptionSource source_from_name(std::string_view name) {
  for (int i = 0; i < 9; ++i) {
    if (kSourceNames[i] == name) return static_cast<CaptionSource>(i);
  }
  throw DataError("unknown caption source '" + std::string(name) + "'");
}

bool is_machine_tier(CaptionSource s) {
  return s == CaptionSource::MGC_TF_60 || s == CaptionSource::MGC_TF_80 || s == CaptionSource::MGC_TF_135 ||
         s == CaptionSource::MGC_LMM_0 || s == CaptionSource::MGC_LMM_32;
}

const ImageCaptions& CaptionDataset::at(const std::string& image_id) const {
  auto it = images_.find(image_id);
  if (it == images_.end()) throw DataError("image '" + image_id + "' is not in the caption dataset");
  return it->second;
}

CaptionDataset caption_dataset_from_json(const json& doc) {
  std::map<std::string, ImageCaptions> images;
  try {
    for (const json& entry : doc.at("images")) {
      const auto id = entry.at("id").get<std::string>();
      ImageCaptions caps;
      caps.human_captions = entry.value("human_captions", std::vector<std::string>{});
      if (auto mc = entry.find("machine_captions"); mc != entry.end()) {
        for (auto it = mc->begin(); it != mc->end(); ++it) {
          const CaptionSource tier = source_from_name(it.key());
          if (!is_machine_tier(tier)) {
            throw DataError("image '" + id + "': '" + it.key() + "' is not a machine caption tier");
          }
          caps.machine_captions.emplace(tier, it.value().get<std::string>());
        }
      }
      if (auto gt = entry.find("gt_objects"); gt != entry.end() && !gt->is_null()) {
        caps.gt_objects = gt->get<std::set<std::string>>();
      }
      if (!images.emplace(id, std::move(caps)).second) throw DataError("duplicate image id '" + id + "'");
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("caption dataset: ") + e.what());
  }
  return CaptionDataset(std::move(images));
}

CaptionDataset load_caption_dataset(const std::filesystem::path& path) {
  try {
    return caption_dataset_from_json(read_json_file(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace iclkit
