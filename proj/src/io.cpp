#include "lvap/io.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <memory>
#include <set>
#include <sstream>
#include <vector>

#include "json.hpp"

namespace lvap {

using nlohmann::json;

namespace {

LoadError schema(const std::string& message) {
  return LoadError(LoadError::Kind::SchemaViolation, message);
}

LoadError dangling(const std::string& message) {
  return LoadError(LoadError::Kind::DanglingReference, message);
}

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};

std::unique_ptr<std::FILE, FileCloser> open_for_read(const std::filesystem::path& path) {
  std::unique_ptr<std::FILE, FileCloser> file(std::fopen(path.c_str(), "rb"));
  if (!file) {
    throw LoadError(LoadError::Kind::IoFailure, "cannot open '" + path.string() + "' for reading");
  }
  return file;
}

// Shared SAX plumbing: depth tracking and syntax error capture.
class SaxBase : public nlohmann::json_sax<json> {
 public:
  bool binary(binary_t&) override { return true; }
  bool parse_error(std::size_t position, const std::string& last_token,
                   const nlohmann::detail::exception& ex) override {
    error_ = "syntax error at byte " + std::to_string(position) + " near '" + last_token +
             "': " + ex.what();
    return false;
  }
  const std::string& error() const { return error_; }

 private:
  std::string error_;
};

template <typename Input, typename Handler>
void run_sax(Input&& input, Handler& handler) {
  const bool ok = json::sax_parse(std::forward<Input>(input), &handler);
  if (!ok) {
    throw LoadError(LoadError::Kind::MalformedFile,
                    handler.error().empty() ? std::string("malformed JSON") : handler.error());
  }
}

// ---------------------------------------------------------------------------
// Detections: a flat array of small objects, filled straight into structs.

class DetectionHandler final : public SaxBase {
 public:
  explicit DetectionHandler(LoadSummary& summary) : summary_(summary) {}

  std::vector<Detection> detections;
  std::int64_t clamped = 0;

  bool null() override { return scalar(); }
  bool boolean(bool) override { return scalar(); }
  bool number_integer(number_integer_t v) override { return number(static_cast<double>(v), v); }
  bool number_unsigned(number_unsigned_t v) override {
    return number(static_cast<double>(v), static_cast<std::int64_t>(v));
  }
  bool number_float(number_float_t v, const string_t&) override {
    return number(v, std::nullopt);
  }
  bool string(string_t&) override { return scalar(); }

  bool start_object(std::size_t) override {
    if (depth_ == 0) throw schema("detections file must be a JSON array");
    if (depth_ == 1) {
      current_ = Detection{};
      seen_ = 0;
      bbox_len_ = 0;
    } else if (depth_ == 2) {
      misplaced();
    }
    ++depth_;
    return true;
  }
  bool end_object() override {
    --depth_;
    if (depth_ == 1) finish();
    return true;
  }
  bool start_array(std::size_t) override {
    if (depth_ == 1) throw schema("detection entry " + std::to_string(detections.size()) +
                                  " is not an object");
    if (depth_ == 2) {
      if (key_ == "bbox") {
        in_bbox_ = true;
        seen_ |= kBbox;
      } else {
        misplaced();
      }
    }
    ++depth_;
    return true;
  }
  bool end_array() override {
    --depth_;
    if (depth_ == 2) in_bbox_ = false;
    return true;
  }
  bool key(string_t& k) override {
    if (depth_ == 2) {
      key_ = k;
      if (k != "image_id" && k != "category_id" && k != "bbox" && k != "score") {
        ++summary_.unknown_fields[k];
      }
    }
    return true;
  }

 private:
  static constexpr int kImage = 1, kCategory = 2, kBbox = 4, kScore = 8;

  bool scalar() {
    if (depth_ == 0) throw schema("detections file must be a JSON array");
    if (depth_ == 1) throw schema("detection entry " + std::to_string(detections.size()) +
                                  " is not an object");
    if (depth_ == 2) misplaced();
    if (depth_ == 3 && in_bbox_) throw schema(where() + "bbox holds a non-number");
    return true;
  }

  void misplaced() {
    if (key_ == "image_id" || key_ == "category_id" || key_ == "score" || key_ == "bbox") {
      throw schema(where() + "field '" + key_ + "' has the wrong type");
    }
  }

  bool number(double value, std::optional<std::int64_t> integral) {
    if (depth_ <= 1) return scalar();
    if (depth_ == 2) {
      if (key_ == "image_id" || key_ == "category_id") {
        if (!integral) {
          if (value != std::floor(value)) throw schema(where() + key_ + " must be an integer");
          integral = static_cast<std::int64_t>(value);
        }
        if (key_ == "image_id") {
          current_.image_id = *integral;
          seen_ |= kImage;
        } else {
          current_.category_id = *integral;
          seen_ |= kCategory;
        }
      } else if (key_ == "score") {
        current_.score = value;
        seen_ |= kScore;
      } else if (key_ == "bbox") {
        misplaced();
      }
    } else if (depth_ == 3 && in_bbox_) {
      if (bbox_len_ < 4) bbox_[bbox_len_] = value;
      ++bbox_len_;
    }
    return true;
  }

  std::string where() const {
    return "detection entry " + std::to_string(detections.size()) + ": ";
  }

  void finish() {
    if (!(seen_ & kImage)) throw schema(where() + "missing image_id");
    if (!(seen_ & kCategory)) throw schema(where() + "missing category_id");
    if (!(seen_ & kBbox)) throw schema(where() + "missing bbox");
    if (!(seen_ & kScore)) throw schema(where() + "missing score");
    if (bbox_len_ != 4) throw schema(where() + "bbox must have 4 numbers");
    current_.bbox = {bbox_[0], bbox_[1], bbox_[2], bbox_[3]};
    if (!current_.bbox.valid()) throw schema(where() + "bbox has negative size");
    if (!std::isfinite(current_.score)) throw schema(where() + "score is not finite");
    if (current_.score < 0.0 || current_.score > 1.0) {
      current_.score = std::clamp(current_.score, 0.0, 1.0);
      ++clamped;
    }
    current_.id = static_cast<DetectionId>(detections.size());
    detections.push_back(current_);
  }

  LoadSummary& summary_;
  int depth_ = 0;
  std::string key_;
  bool in_bbox_ = false;
  Detection current_;
  int seen_ = 0;
  std::array<double, 4> bbox_{};
  std::size_t bbox_len_ = 0;
};

template <typename Input>
DetectionSet read_detections(Input&& input, const Dataset* dataset, LoadSummary* summary) {
  LoadSummary local;
  LoadSummary& sink = summary ? *summary : local;
  DetectionHandler handler(sink);
  run_sax(std::forward<Input>(input), handler);

  DetectionSet out;
  out.detections = std::move(handler.detections);
  out.clamped_scores = static_cast<std::size_t>(handler.clamped);
  sink.clamped_scores += handler.clamped;
  sink.records += static_cast<std::int64_t>(out.detections.size());
  if (dataset) {
    for (const auto& d : out.detections) {
      if (!dataset->find_image(d.image_id)) {
        throw dangling("detection " + std::to_string(d.id) + " cites unknown image " +
                       std::to_string(d.image_id));
      }
      if (!dataset->find_category(d.category_id)) {
        throw dangling("detection " + std::to_string(d.id) + " cites unknown category " +
                       std::to_string(d.category_id));
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Groundtruth: elements of the three top-level arrays are collected as small
// JSON values, one at a time; "segmentation" subtrees are skipped.

class SectionCollector final : public SaxBase {
 public:
  using Callback = std::function<void(const std::string& section, json&& element)>;

  SectionCollector(Callback callback, LoadSummary& summary)
      : callback_(std::move(callback)), summary_(summary) {}

  std::set<std::string> sections_seen;

  bool null() override { return value(json(nullptr)); }
  bool boolean(bool v) override { return value(json(v)); }
  bool number_integer(number_integer_t v) override { return value(json(v)); }
  bool number_unsigned(number_unsigned_t v) override { return value(json(v)); }
  bool number_float(number_float_t v, const string_t&) override { return value(json(v)); }
  bool string(string_t& v) override { return value(json(std::move(v))); }

  bool start_object(std::size_t) override { return open(json::object()); }
  bool start_array(std::size_t) override { return open(json::array()); }
  bool end_object() override { return close(); }
  bool end_array() override { return close(); }

  bool key(string_t& k) override {
    if (skip_ > 0) return true;
    if (depth_ == 1) {
      section_ = k;
      tracked_ = is_tracked(k);
      if (tracked_) {
        sections_seen.insert(k);
      } else if (k != "info" && k != "licenses") {
        ++summary_.unknown_fields[k];
      }
    } else if (!stack_.empty()) {
      if (depth_ == 3 && k == "segmentation") {
        skip_next_ = true;
        ++summary_.unknown_fields[k];
      } else {
        pending_key_ = k;
      }
    }
    return true;
  }

 private:
  static bool is_tracked(const std::string& k) {
    return k == "images" || k == "annotations" || k == "categories";
  }

  bool open(json container) {
    const bool is_array = container.is_array();
    ++depth_;
    if (skip_ > 0) {
      ++skip_;
      return true;
    }
    if (skip_next_) {
      skip_next_ = false;
      skip_ = 1;
      return true;
    }
    if (depth_ == 1) {
      if (is_array) throw schema("annotation file must be a JSON object");
      return true;
    }
    if (depth_ == 2) {
      if (tracked_ && !is_array) throw schema("'" + section_ + "' must be an array");
      return true;
    }
    if (depth_ == 3 && tracked_) {
      if (is_array) throw schema("'" + section_ + "' entries must be objects");
      element_ = json::object();
      stack_.push_back(&element_);
      return true;
    }
    if (!stack_.empty()) stack_.push_back(insert(std::move(container)));
    return true;
  }

  bool close() {
    --depth_;
    if (skip_ > 0) {
      --skip_;
      return true;
    }
    if (!stack_.empty()) {
      stack_.pop_back();
      if (stack_.empty()) callback_(section_, std::move(element_));
    }
    return true;
  }

  bool value(json v) {
    if (skip_next_) {
      skip_next_ = false;
      return true;
    }
    if (skip_ > 0) return true;
    if (depth_ == 0) throw schema("annotation file must be a JSON object");
    if (depth_ == 1 && tracked_) throw schema("'" + section_ + "' must be an array");
    if (depth_ == 2 && tracked_) throw schema("'" + section_ + "' entries must be objects");
    if (!stack_.empty()) insert(std::move(v));
    return true;
  }

  json* insert(json v) {
    json& parent = *stack_.back();
    if (parent.is_array()) {
      parent.push_back(std::move(v));
      return &parent.back();
    }
    json& slot = parent[pending_key_];
    slot = std::move(v);
    return &slot;
  }

  Callback callback_;
  LoadSummary& summary_;
  int depth_ = 0;
  int skip_ = 0;
  bool skip_next_ = false;
  bool tracked_ = false;
  std::string section_;
  std::string pending_key_;
  json element_;
  std::vector<json*> stack_;
};

std::int64_t require_int(const json& obj, const char* field, const std::string& where) {
  auto it = obj.find(field);
  if (it == obj.end()) throw schema(where + ": missing '" + field + "'");
  if (it->is_number_integer()) return it->get<std::int64_t>();
  if (it->is_number_float()) {
    const double v = it->get<double>();
    if (v == std::floor(v)) return static_cast<std::int64_t>(v);
  }
  throw schema(where + ": '" + field + "' must be an integer");
}

std::vector<CategoryId> int_list(const json& obj, const char* field, const std::string& where) {
  std::vector<CategoryId> out;
  auto it = obj.find(field);
  if (it == obj.end() || it->is_null()) return out;
  if (!it->is_array()) throw schema(where + ": '" + field + "' must be an array");
  for (const auto& v : *it) {
    if (!v.is_number_integer()) throw schema(where + ": '" + field + "' must hold integers");
    out.push_back(v.get<CategoryId>());
  }
  return out;
}

void count_unknown(const json& obj, std::initializer_list<const char*> known,
                   LoadSummary& summary) {
  for (const auto& item : obj.items()) {
    bool is_known = false;
    for (const char* k : known) {
      if (item.key() == k) {
        is_known = true;
        break;
      }
    }
    if (!is_known) ++summary.unknown_fields[item.key()];
  }
}

bool truthy(const json& v) {
  if (v.is_boolean()) return v.get<bool>();
  if (v.is_number()) return v.get<double>() != 0.0;
  return false;
}

template <typename Input>
Dataset read_dataset(Input&& input, LoadSummary* summary) {
  LoadSummary local;
  LoadSummary& sink = summary ? *summary : local;
  std::vector<Category> categories;
  std::vector<ImageRecord> images;
  std::vector<GroundTruthInstance> instances;

  auto on_element = [&](const std::string& section, json&& e) {
    if (section == "images") {
      const std::string where = "images[" + std::to_string(images.size()) + "]";
      ImageRecord image;
      image.id = require_int(e, "id", where);
      image.federated = e.contains("neg_category_ids") ||
                        e.contains("not_exhaustive_category_ids") ||
                        e.contains("pos_category_ids");
      image.positive_category_ids = int_list(e, "pos_category_ids", where);
      image.negative_category_ids = int_list(e, "neg_category_ids", where);
      image.not_exhaustive_category_ids = int_list(e, "not_exhaustive_category_ids", where);
      count_unknown(e, {"id", "neg_category_ids", "not_exhaustive_category_ids",
                        "pos_category_ids"},
                    sink);
      images.push_back(std::move(image));
    } else if (section == "categories") {
      const std::string where = "categories[" + std::to_string(categories.size()) + "]";
      Category category;
      category.id = require_int(e, "id", where);
      if (auto it = e.find("name"); it != e.end()) {
        if (!it->is_string()) throw schema(where + ": 'name' must be a string");
        category.name = it->get<std::string>();
      }
      if (e.contains("image_count") && !e["image_count"].is_null()) {
        category.image_count = require_int(e, "image_count", where);
        if (*category.image_count < 0) throw schema(where + ": negative image_count");
      }
      count_unknown(e, {"id", "name", "image_count"}, sink);
      categories.push_back(std::move(category));
    } else {
      const std::string where = "annotations[" + std::to_string(instances.size()) + "]";
      GroundTruthInstance inst;
      inst.id = require_int(e, "id", where);
      inst.image_id = require_int(e, "image_id", where);
      inst.category_id = require_int(e, "category_id", where);
      auto bbox = e.find("bbox");
      if (bbox == e.end()) throw schema(where + ": missing 'bbox'");
      if (!bbox->is_array() || bbox->size() != 4) {
        throw schema(where + ": 'bbox' must be [x, y, w, h]");
      }
      std::array<double, 4> v{};
      for (std::size_t i = 0; i < 4; ++i) {
        if (!(*bbox)[i].is_number()) throw schema(where + ": 'bbox' must hold numbers");
        v[i] = (*bbox)[i].get<double>();
      }
      inst.bbox = {v[0], v[1], v[2], v[3]};
      if (!inst.bbox.valid()) throw schema(where + ": bbox has negative size");
      if (auto it = e.find("iscrowd"); it != e.end()) inst.ignore = inst.ignore || truthy(*it);
      if (auto it = e.find("ignore"); it != e.end()) inst.ignore = inst.ignore || truthy(*it);
      count_unknown(e, {"id", "image_id", "category_id", "bbox", "iscrowd", "ignore"}, sink);
      instances.push_back(inst);
    }
  };

  SectionCollector collector(on_element, sink);
  run_sax(std::forward<Input>(input), collector);
  for (const char* required : {"images", "annotations", "categories"}) {
    if (!collector.sections_seen.count(required)) {
      throw schema(std::string("annotation file has no '") + required + "' array");
    }
  }

  std::set<ImageId> image_ids;
  std::set<CategoryId> category_ids;
  for (const auto& i : images) image_ids.insert(i.id);
  for (const auto& c : categories) category_ids.insert(c.id);
  for (const auto& inst : instances) {
    if (!image_ids.count(inst.image_id)) {
      throw dangling("annotation " + std::to_string(inst.id) + " cites unknown image " +
                     std::to_string(inst.image_id));
    }
    if (!category_ids.count(inst.category_id)) {
      throw dangling("annotation " + std::to_string(inst.id) + " cites unknown category " +
                     std::to_string(inst.category_id));
    }
  }
  for (const auto& image : images) {
    for (const auto* ids : {&image.positive_category_ids, &image.negative_category_ids,
                            &image.not_exhaustive_category_ids}) {
      for (auto id : *ids) {
        if (!category_ids.count(id)) {
          throw dangling("image " + std::to_string(image.id) + " cites unknown category " +
                         std::to_string(id));
        }
      }
    }
  }
  sink.records += static_cast<std::int64_t>(images.size() + categories.size() + instances.size());
  try {
    return Dataset(std::move(categories), std::move(images), std::move(instances));
  } catch (const DatasetError& e) {
    throw schema(e.what());
  }
}

void append_ids(std::string& out, const std::vector<CategoryId>& ids) {
  out += '[';
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(ids[i]);
  }
  out += ']';
}

void append_box(std::string& out, const BoundingBox& b) {
  out += '[';
  out += format_double(b.x);
  out += ',';
  out += format_double(b.y);
  out += ',';
  out += format_double(b.w);
  out += ',';
  out += format_double(b.h);
  out += ']';
}

void write_or_fail(std::ostream& out, const std::string& chunk) {
  out.write(chunk.data(), static_cast<std::streamsize>(chunk.size()));
  if (!out) throw LoadError(LoadError::Kind::IoFailure, "write failed");
}

}  // namespace

LoadError::LoadError(Kind kind, const std::string& message)
    : std::runtime_error(std::string(load_error_name(kind)) + ": " + message), kind_(kind) {}

const char* load_error_name(LoadError::Kind kind) {
  switch (kind) {
    case LoadError::Kind::MalformedFile: return "MalformedFile";
    case LoadError::Kind::SchemaViolation: return "SchemaViolation";
    case LoadError::Kind::DanglingReference: return "DanglingReference";
    case LoadError::Kind::IoFailure: return "IoFailure";
  }
  return "LoadError";
}

std::string LoadSummary::describe() const {
  std::ostringstream os;
  os << records << " records";
  if (clamped_scores) os << ", " << clamped_scores << " scores clamped to [0,1]";
  if (!unknown_fields.empty()) {
    os << ", ignored fields:";
    for (const auto& [name, count] : unknown_fields) os << ' ' << name << 'x' << count;
  }
  return os.str();
}

Dataset load_dataset(const std::filesystem::path& path, LoadSummary* summary) {
  auto file = open_for_read(path);
  return read_dataset(file.get(), summary);
}

Dataset load_dataset(std::istream& in, LoadSummary* summary) {
  return read_dataset(in, summary);
}

DetectionSet load_detections(const std::filesystem::path& path, const Dataset& dataset,
                             LoadSummary* summary) {
  auto file = open_for_read(path);
  return read_detections(file.get(), &dataset, summary);
}

DetectionSet load_detections(std::istream& in, const Dataset& dataset, LoadSummary* summary) {
  return read_detections(in, &dataset, summary);
}

DetectionSet load_detections(const std::filesystem::path& path, LoadSummary* summary) {
  auto file = open_for_read(path);
  return read_detections(file.get(), nullptr, summary);
}

DetectionSet load_detections(std::istream& in, LoadSummary* summary) {
  return read_detections(in, nullptr, summary);
}

std::string format_double(double value) {
  if (!std::isfinite(value)) return "null";
  std::array<char, 64> buffer{};
  auto [ptr, ec] = std::to_chars(buffer.data(), buffer.data() + buffer.size(), value);
  std::string text(buffer.data(), ptr);
  // Keep floats recognizable as floats in JSON ("1.0", not "1").
  if (text.find_first_of(".eEn") == std::string::npos) text += ".0";
  return text;
}

void write_dataset(const Dataset& dataset, std::ostream& out) {
  std::string chunk = "{\"images\":[";
  for (std::size_t i = 0; i < dataset.images().size(); ++i) {
    const auto& image = dataset.images()[i];
    if (i) chunk += ',';
    chunk += "\n{\"id\":" + std::to_string(image.id);
    if (image.federated) {
      chunk += ",\"pos_category_ids\":";
      append_ids(chunk, image.positive_category_ids);
      chunk += ",\"neg_category_ids\":";
      append_ids(chunk, image.negative_category_ids);
      chunk += ",\"not_exhaustive_category_ids\":";
      append_ids(chunk, image.not_exhaustive_category_ids);
    }
    chunk += '}';
  }
  chunk += "],\n\"categories\":[";
  for (std::size_t i = 0; i < dataset.categories().size(); ++i) {
    const auto& c = dataset.categories()[i];
    if (i) chunk += ',';
    chunk += "\n{\"id\":" + std::to_string(c.id) + ",\"name\":" + json(c.name).dump();
    if (c.image_count) chunk += ",\"image_count\":" + std::to_string(*c.image_count);
    chunk += '}';
  }
  chunk += "],\n\"annotations\":[";
  write_or_fail(out, chunk);
  for (std::size_t i = 0; i < dataset.instances().size(); ++i) {
    const auto& a = dataset.instances()[i];
    chunk.clear();
    if (i) chunk += ',';
    chunk += "\n{\"id\":" + std::to_string(a.id) + ",\"image_id\":" + std::to_string(a.image_id) +
             ",\"category_id\":" + std::to_string(a.category_id) + ",\"bbox\":";
    append_box(chunk, a.bbox);
    chunk += ",\"iscrowd\":";
    chunk += a.ignore ? '1' : '0';
    chunk += '}';
    write_or_fail(out, chunk);
  }
  write_or_fail(out, "]}\n");
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError(LoadError::Kind::IoFailure, "cannot open '" + path.string() + "'");
  write_dataset(dataset, out);
}

void write_detections(const DetectionSet& dets, std::ostream& out) {
  std::string chunk;
  write_or_fail(out, "[");
  for (std::size_t i = 0; i < dets.detections.size(); ++i) {
    const auto& d = dets.detections[i];
    chunk.clear();
    if (i) chunk += ',';
    chunk += "\n{\"image_id\":" + std::to_string(d.image_id) +
             ",\"category_id\":" + std::to_string(d.category_id) + ",\"bbox\":";
    append_box(chunk, d.bbox);
    chunk += ",\"score\":" + format_double(d.score) + '}';
    write_or_fail(out, chunk);
  }
  write_or_fail(out, "\n]\n");
}

void write_detections(const DetectionSet& dets, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError(LoadError::Kind::IoFailure, "cannot open '" + path.string() + "'");
  write_detections(dets, out);
}

void write_file_atomically(const std::filesystem::path& path, const std::string& contents) {
  auto tmp = path;
  tmp += ".partial";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw LoadError(LoadError::Kind::IoFailure, "cannot open '" + tmp.string() + "'");
    write_or_fail(out, contents);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw LoadError(LoadError::Kind::IoFailure, "cannot write '" + path.string() + "'");
  }
}

}  // namespace lvap
