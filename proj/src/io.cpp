#include "fingervision/io.hpp"

#include <bit>
#include <cctype>
#include <cstring>
#include <fstream>
#include <map>
#include <span>
#include <sstream>

namespace fv {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace {

constexpr char kFieldMagic[4] = {'F', 'V', 'F', '1'};
constexpr char kCheckpointMagic[4] = {'F', 'V', 'C', 'K'};

std::string pack(const char (&magic)[4], const json& header, std::span<const float> payload) {
  const std::string text = header.dump();
  const auto len = static_cast<std::uint32_t>(text.size());
  std::string out(magic, 4);
  out.append(reinterpret_cast<const char*>(&len), 4);
  out += text;
  out.append(reinterpret_cast<const char*>(payload.data()), payload.size() * sizeof(float));
  return out;
}

struct Unpacked {
  json header;
  std::vector<float> payload;
};

Unpacked unpack(const char (&magic)[4], const std::string& bytes, const char* what) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), magic, 4) != 0) {
    throw Error(Errc::Data, std::string(what) + ": bad magic");
  }
  std::uint32_t len = 0;
  std::memcpy(&len, bytes.data() + 4, 4);
  if (bytes.size() < 8 + static_cast<std::size_t>(len)) throw Error(Errc::Data, std::string(what) + ": truncated header");
  Unpacked out;
  try {
    out.header = json::parse(bytes.begin() + 8, bytes.begin() + 8 + len);
  } catch (const json::exception& e) {
    throw Error(Errc::Data, std::string(what) + ": malformed header: " + e.what());
  }
  const std::size_t rest = bytes.size() - 8 - len;
  if (rest % sizeof(float) != 0) throw Error(Errc::Data, std::string(what) + ": payload is not whole float32 values");
  out.payload.resize(rest / sizeof(float));
  std::memcpy(out.payload.data(), bytes.data() + 8 + len, rest);
  return out;
}

}  // namespace

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::Io, "cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(Errc::Io, "failed writing '" + path.string() + "'");
}

json to_json(const Roi& roi) { return {{"x", roi.x}, {"y", roi.y}, {"width", roi.width}, {"height", roi.height}}; }

Roi roi_from_json(const json& j) {
  return {j.at("x").get<double>(), j.at("y").get<double>(), j.at("width").get<double>(), j.at("height").get<double>()};
}

// ---------------------------------------------------------------------------

FieldTensor to_field_tensor(const std::vector<DeformationField>& fields, double frame_rate) {
  FieldTensor t;
  t.frame_rate = frame_rate;
  const int rows = fields.empty() ? kGridSize : fields[0].rows();
  const int cols = fields.empty() ? kGridSize : fields[0].cols();
  t.roi = fields.empty() ? Roi{} : fields[0].roi();
  t.shape = {static_cast<int>(fields.size()), rows, cols, kFieldChannels};
  t.data.reserve(fields.size() * rows * cols * kFieldChannels);
  for (const DeformationField& f : fields) {
    if (f.rows() != rows || f.cols() != cols) throw Error(Errc::ShapeMismatch, "fields must share a grid size");
    for (double v : f.values()) t.data.push_back(static_cast<float>(v));
  }
  return t;
}

std::vector<DeformationField> to_fields(const FieldTensor& t) {
  if (t.shape.size() != 4 || t.shape[3] != kFieldChannels) throw Error(Errc::ShapeMismatch, "field tensor must be [F, R, C, 3]");
  const int rows = t.shape[1];
  const int cols = t.shape[2];
  const std::size_t per = static_cast<std::size_t>(rows) * cols * kFieldChannels;
  std::vector<DeformationField> out;
  for (std::size_t f = 0; f < t.frames(); ++f) {
    DeformationField field(t.roi, rows, cols);
    const float* src = t.data.data() + f * per;
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) {
        const std::size_t i = (static_cast<std::size_t>(r) * cols + c) * kFieldChannels;
        field.set(r, c, src[i], src[i + 1]);
      }
    }
    out.push_back(std::move(field));
  }
  return out;
}

std::string encode_fvf(const FieldTensor& t) {
  std::size_t n = 1;
  for (int d : t.shape) n *= static_cast<std::size_t>(d);
  if (t.shape.size() != 4 || n != t.data.size()) throw Error(Errc::ShapeMismatch, "FVF1 payload does not match shape");
  const json header = {{"shape", t.shape},
                       {"dtype", "float32"},
                       {"channels", {"dx", "dy", "magnitude"}},
                       {"frame_rate", t.frame_rate},
                       {"roi", to_json(t.roi)}};
  return pack(kFieldMagic, header, t.data);
}

FieldTensor decode_fvf(const std::string& bytes) {
  Unpacked u = unpack(kFieldMagic, bytes, "FVF1");
  FieldTensor t;
  try {
    t.shape = u.header.at("shape").get<std::vector<int>>();
    if (u.header.at("dtype").get<std::string>() != "float32") throw Error(Errc::Data, "FVF1: unsupported dtype");
    t.frame_rate = u.header.value("frame_rate", 15.0);
    if (u.header.contains("roi")) t.roi = roi_from_json(u.header.at("roi"));
  } catch (const json::exception& e) {
    throw Error(Errc::Data, std::string("FVF1: bad header: ") + e.what());
  }
  std::size_t n = 1;
  for (int d : t.shape) n *= static_cast<std::size_t>(d);
  if (t.shape.size() != 4 || n != u.payload.size()) {
    throw Error(Errc::Data, "FVF1: payload length does not match shape");
  }
  t.data = std::move(u.payload);
  return t;
}

void write_fvf(const std::filesystem::path& path, const FieldTensor& t) { write_file(path, encode_fvf(t)); }

FieldTensor read_fvf(const std::filesystem::path& path) {
  try {
    return decode_fvf(read_file(path));
  } catch (const Error& e) {
    if (e.code() == Errc::Io) throw;
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------

std::string encode_pgm(const GrayImage& image) {
  std::string out = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(image.pixels.data()), image.pixels.size());
  return out;
}

GrayImage decode_pgm(const std::string& bytes) {
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    return bytes.substr(start, pos - start);
  };
  if (token() != "P5") throw Error(Errc::Data, "PGM: only binary P5 images are supported");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(token());
    h = std::stoi(token());
    maxval = std::stoi(token());
  } catch (const std::exception&) {
    throw Error(Errc::Data, "PGM: malformed header");
  }
  if (maxval != 255 || w < 0 || h < 0) throw Error(Errc::Data, "PGM: expected 8-bit image");
  ++pos;  // single whitespace before the raster
  GrayImage image(w, h);
  if (bytes.size() < pos + image.pixels.size()) throw Error(Errc::Data, "PGM: truncated raster");
  std::memcpy(image.pixels.data(), bytes.data() + pos, image.pixels.size());
  return image;
}

void write_pgm(const std::filesystem::path& path, const GrayImage& image) { write_file(path, encode_pgm(image)); }

GrayImage read_pgm(const std::filesystem::path& path) {
  try {
    return decode_pgm(read_file(path));
  } catch (const Error& e) {
    if (e.code() == Errc::Io) throw;
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------

json to_json(const NetConfig& c) {
  return {{"in_channels", c.in_channels}, {"hidden_channels", c.hidden_channels}, {"kernel", c.kernel},
          {"height", c.height},           {"width", c.width},                     {"seq_len", c.seq_len},
          {"classes", c.classes}};
}

NetConfig net_config_from_json(const json& j) {
  NetConfig c;
  c.in_channels = j.at("in_channels").get<int>();
  c.hidden_channels = j.at("hidden_channels").get<int>();
  c.kernel = j.at("kernel").get<int>();
  c.height = j.at("height").get<int>();
  c.width = j.at("width").get<int>();
  c.seq_len = j.at("seq_len").get<int>();
  c.classes = j.at("classes").get<int>();
  c.validate();
  return c;
}

std::string encode_checkpoint(const NetParams<float>& params) {
  json tensors = json::array();
  for (const TensorInfo& info : param_layout(params.config)) {
    tensors.push_back({{"name", info.name}, {"shape", info.shape}});
  }
  const json header = {{"config", to_json(params.config)}, {"dtype", "float32"}, {"tensors", tensors}};
  return pack(kCheckpointMagic, header, params.values);
}

NetParams<float> decode_checkpoint(const std::string& bytes) {
  Unpacked u = unpack(kCheckpointMagic, bytes, "checkpoint");
  NetConfig cfg;
  try {
    cfg = net_config_from_json(u.header.at("config"));
    const auto layout = param_layout(cfg);
    const json& tensors = u.header.at("tensors");
    if (tensors.size() != layout.size()) throw Error(Errc::Data, "checkpoint: tensor list does not match config");
    for (std::size_t i = 0; i < layout.size(); ++i) {
      if (tensors[i].at("name").get<std::string>() != layout[i].name ||
          tensors[i].at("shape").get<std::vector<int>>() != layout[i].shape) {
        throw Error(Errc::Data, "checkpoint: tensor '" + layout[i].name + "' out of order or misshapen");
      }
    }
  } catch (const json::exception& e) {
    throw Error(Errc::Data, std::string("checkpoint: bad header: ") + e.what());
  }
  NetParams<float> params(cfg);
  if (u.payload.size() != params.values.size()) throw Error(Errc::Data, "checkpoint: payload length does not match config");
  std::copy(u.payload.begin(), u.payload.end(), params.values.begin());
  return params;
}

void write_checkpoint(const std::filesystem::path& path, const NetParams<float>& params) {
  write_file(path, encode_checkpoint(params));
}

NetParams<float> read_checkpoint(const std::filesystem::path& path) {
  try {
    return decode_checkpoint(read_file(path));
  } catch (const Error& e) {
    if (e.code() == Errc::Io) throw;
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------

json to_json(const MarkerSet& markers) {
  json pts = json::array();
  for (const Point2& p : markers.points) pts.push_back({p.x, p.y});
  return {{"frame_index", markers.frame_index}, {"points", pts}};
}

MarkerSet marker_set_from_json(const json& j) {
  MarkerSet m;
  m.frame_index = j.value("frame_index", std::uint64_t{0});
  for (const json& p : j.at("points")) m.points.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  return m;
}

json to_json(const DisplacementVectors& v) {
  json anchors = json::array(), vectors = json::array(), valid = json::array();
  for (std::size_t i = 0; i < v.size(); ++i) {
    anchors.push_back({v.anchors[i].x, v.anchors[i].y});
    vectors.push_back({v.vectors[i].x, v.vectors[i].y});
    valid.push_back(static_cast<bool>(v.validity[i]));
  }
  return {{"anchors", anchors}, {"vectors", vectors}, {"validity", valid}};
}

DisplacementVectors displacement_vectors_from_json(const json& j) {
  DisplacementVectors v;
  for (const json& p : j.at("anchors")) v.anchors.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  for (const json& p : j.at("vectors")) v.vectors.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  for (const json& b : j.at("validity")) v.validity.push_back(b.get<bool>());
  return v;
}

json to_json(const DatasetManifest& manifest) {
  const DatasetCounts c = manifest.counts();
  json records = json::array();
  for (const SampleRecord& r : manifest.records) {
    records.push_back({{"path", r.path},
                       {"label", static_cast<int>(r.label)},
                       {"raw_id", r.raw_id},
                       {"offset", r.offset},
                       {"split", to_string(r.split)}});
  }
  return {{"seed", manifest.seed},
          {"counts",
           {{"raw", c.raw}, {"samples", c.samples}, {"slip", c.slip}, {"non_slip", c.non_slip},
            {"train", c.train}, {"test", c.test}}},
          {"records", records}};
}

DatasetManifest manifest_from_json(const json& j) {
  DatasetManifest m;
  try {
    m.seed = j.at("seed").get<std::uint64_t>();
    for (const json& r : j.at("records")) {
      SampleRecord rec;
      rec.path = r.at("path").get<std::string>();
      const int label = r.at("label").get<int>();
      if (label != 0 && label != 1) throw Error(Errc::Data, "manifest: label must be 0 or 1");
      rec.label = static_cast<SlipLabel>(label);
      rec.raw_id = r.at("raw_id").get<std::uint64_t>();
      rec.offset = r.at("offset").get<int>();
      if (rec.offset < 0 || rec.offset >= kWindowsPerRaw) throw Error(Errc::Data, "manifest: window offset out of range");
      rec.split = split_from_string(r.value("split", std::string("unassigned")));
      m.records.push_back(std::move(rec));
    }
  } catch (const json::exception& e) {
    throw Error(Errc::Data, std::string("manifest: ") + e.what());
  }
  return m;
}

void write_dataset(const std::filesystem::path& dir, const std::vector<RawSample>& raws,
                   const DatasetManifest& manifest) {
  std::filesystem::create_directories(dir);
  std::map<std::uint64_t, std::string> paths;
  for (const SampleRecord& r : manifest.records) paths.emplace(r.raw_id, r.path);
  for (const RawSample& raw : raws) {
    const auto it = paths.find(raw.raw_id);
    if (it == paths.end()) throw Error(Errc::Data, "raw " + std::to_string(raw.raw_id) + " missing from manifest");
    write_fvf(dir / it->second, to_field_tensor(raw.frames));
  }
  write_file(dir / "manifest.json", to_json(manifest).dump(1) + "\n");
}

DatasetDir read_dataset(const std::filesystem::path& dir) {
  DatasetDir out;
  json j;
  try {
    j = json::parse(read_file(dir / "manifest.json"));
  } catch (const json::exception& e) {
    throw Error(Errc::Data, (dir / "manifest.json").string() + ": " + e.what());
  }
  out.manifest = manifest_from_json(j);
  std::map<std::uint64_t, std::size_t> loaded;
  for (const SampleRecord& r : out.manifest.records) {
    const auto it = loaded.find(r.raw_id);
    if (it != loaded.end()) {
      if (out.raws[it->second].label != r.label) {
        throw Error(Errc::Data, "manifest: raw " + std::to_string(r.raw_id) + " has conflicting labels");
      }
      continue;
    }
    RawSample raw;
    raw.raw_id = r.raw_id;
    raw.label = r.label;
    raw.frames = to_fields(read_fvf(dir / r.path));
    loaded.emplace(r.raw_id, out.raws.size());
    out.raws.push_back(std::move(raw));
  }
  return out;
}

json to_json(const TrainReport& report) {
  json acc = json::array();
  for (const auto& [step, a] : report.test_accuracy) acc.push_back({{"step", step}, {"accuracy", a}});
  return {{"step_loss", report.step_loss},
          {"test_accuracy", acc},
          {"wall_clock_s", report.wall_clock_s},
          {"final_accuracy", report.final_accuracy},
          {"config",
           {{"net", to_json(report.options.net)},
            {"steps", report.options.steps},
            {"batch", report.options.batch},
            {"learning_rate", report.options.learning_rate},
            {"eval_every", report.options.eval_every},
            {"seed", report.options.seed}}}};
}

std::string train_report_csv(const TrainReport& report) {
  std::ostringstream out;
  out.precision(9);
  out << "step,loss,test_accuracy\n";
  std::size_t next_eval = 0;
  for (std::size_t i = 0; i < report.step_loss.size(); ++i) {
    const int step = static_cast<int>(i) + 1;
    out << step << ',' << report.step_loss[i] << ',';
    while (next_eval < report.test_accuracy.size() && report.test_accuracy[next_eval].first < step) ++next_eval;
    if (next_eval < report.test_accuracy.size() && report.test_accuracy[next_eval].first == step) {
      out << report.test_accuracy[next_eval].second;
    }
    out << '\n';
  }
  return out.str();
}

json to_json(const EvalResult& r) {
  return {{"accuracy", r.accuracy},
          {"correct", r.correct},
          {"total", r.total},
          {"confusion", {{r.confusion[0][0], r.confusion[0][1]}, {r.confusion[1][0], r.confusion[1][1]}}},
          {"wilson_95", {r.wilson_low, r.wilson_high}}};
}

}  // namespace fv
