#pragma once

// On-disk formats.
//
// FVF1 field tensor:
//   "FVF1" | u32 LE header length | JSON header | float32 LE payload
//   header: {"shape": [frames, rows, cols, 3], "dtype": "float32",
//            "channels": ["dx", "dy", "magnitude"], "frame_rate": 15.0,
//            "roi": {...}}
//   payload: row-major (frame, row, col, channel), product(shape) * 4 bytes.
//
// Checkpoint:
//   "FVCK" | u32 LE header length | JSON header | float32 LE payload
//   header: {"config": NetConfig, "tensors": [{"name", "shape"}...]}
//   payload: tensors back to back in param_layout() order.
//
// Images are 8-bit binary PGM (P5).

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "fingervision/convlstm.hpp"
#include "fingervision/core.hpp"
#include "fingervision/slip.hpp"

namespace fv {

struct FieldTensor {
  std::vector<int> shape;  // frames, rows, cols, channels
  std::vector<float> data;
  double frame_rate = 15.0;
  Roi roi;

  std::size_t frames() const { return shape.empty() ? 0 : static_cast<std::size_t>(shape[0]); }
  friend bool operator==(const FieldTensor&, const FieldTensor&) = default;
};

FieldTensor to_field_tensor(const std::vector<DeformationField>& fields, double frame_rate = 15.0);
std::vector<DeformationField> to_fields(const FieldTensor& tensor);

std::string encode_fvf(const FieldTensor& tensor);
FieldTensor decode_fvf(const std::string& bytes);
void write_fvf(const std::filesystem::path& path, const FieldTensor& tensor);
FieldTensor read_fvf(const std::filesystem::path& path);

std::string encode_pgm(const GrayImage& image);
GrayImage decode_pgm(const std::string& bytes);
void write_pgm(const std::filesystem::path& path, const GrayImage& image);
GrayImage read_pgm(const std::filesystem::path& path);

std::string encode_checkpoint(const NetParams<float>& params);
NetParams<float> decode_checkpoint(const std::string& bytes);
void write_checkpoint(const std::filesystem::path& path, const NetParams<float>& params);
NetParams<float> read_checkpoint(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

nlohmann::json to_json(const Roi& roi);
Roi roi_from_json(const nlohmann::json& j);
nlohmann::json to_json(const NetConfig& cfg);
NetConfig net_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const MarkerSet& markers);
MarkerSet marker_set_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DisplacementVectors& v);
DisplacementVectors displacement_vectors_from_json(const nlohmann::json& j);

nlohmann::json to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const nlohmann::json& j);

/// A dataset directory: one FVF1 tensor per raw sample plus manifest.json.
struct DatasetDir {
  std::vector<RawSample> raws;
  DatasetManifest manifest;
};

void write_dataset(const std::filesystem::path& dir, const std::vector<RawSample>& raws,
                   const DatasetManifest& manifest);
/// Loads every raw tensor the manifest references; labels come from the manifest.
DatasetDir read_dataset(const std::filesystem::path& dir);

nlohmann::json to_json(const TrainReport& report);
/// step,loss,test_accuracy (accuracy empty on steps without an evaluation).
std::string train_report_csv(const TrainReport& report);

nlohmann::json to_json(const EvalResult& result);

}  // namespace fv
