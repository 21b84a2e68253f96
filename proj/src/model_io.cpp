#include <fstream>
#include <sstream>

#include <json.hpp>

#include "tulip/errors.hpp"
#include "tulip/network.hpp"

namespace tulip {

namespace {

constexpr std::string_view kModelVersion = "tulip-model/1";

std::string_view kind_name(SegmentKind kind) {
  return kind == SegmentKind::weight ? "weight" : "bias";
}

}  // namespace

std::string model_to_json(const Model& model) {
  model.params.check_matches(model.spec);
  nlohmann::json doc;
  doc["version"] = kModelVersion;
  doc["layer_dims"] = model.spec.layer_dims;
  std::vector<std::string> acts;
  for (Activation a : model.spec.activations) acts.emplace_back(to_string(a));
  doc["activations"] = acts;
  doc["has_bias"] = model.spec.has_bias;
  nlohmann::json segments = nlohmann::json::array();
  for (const Segment& seg : model.params.layout().segments()) {
    const auto* first = model.params.values().data() + seg.offset;
    segments.push_back({{"layer", seg.layer},
                        {"kind", kind_name(seg.kind)},
                        {"shape", {seg.rows, seg.cols}},
                        {"values", std::vector<double>(first, first + seg.size())}});
  }
  doc["segments"] = std::move(segments);
  return doc.dump(1);
}

Model model_from_json(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("model file is not valid JSON: ") + e.what());
  }
  try {
    if (doc.at("version").get<std::string>() != kModelVersion) {
      throw IoError("unsupported model version '" + doc.at("version").get<std::string>() + "'");
    }
    Model model;
    model.spec.layer_dims = doc.at("layer_dims").get<std::vector<int>>();
    for (const auto& a : doc.at("activations")) {
      model.spec.activations.push_back(parse_activation(a.get<std::string>()));
    }
    model.spec.has_bias = doc.at("has_bias").get<std::vector<bool>>();
    model.spec.validate();
    model.params = ParamVector::zeros(model.spec);
    const auto& segs = model.params.layout().segments();
    const auto& stored = doc.at("segments");
    if (stored.size() != segs.size()) {
      throw IoError("model file has " + std::to_string(stored.size()) + " segments, expected " +
                    std::to_string(segs.size()));
    }
    for (std::size_t i = 0; i < segs.size(); ++i) {
      const auto& s = stored[i];
      const Segment& seg = segs[i];
      const auto shape = s.at("shape").get<std::vector<int>>();
      if (s.at("layer").get<int>() != seg.layer || s.at("kind").get<std::string>() != kind_name(seg.kind) ||
          shape.size() != 2 || shape[0] != seg.rows || shape[1] != seg.cols) {
        throw IoError("segment " + std::to_string(i) + " does not match the declared architecture");
      }
      const auto values = s.at("values").get<std::vector<double>>();
      if (values.size() != seg.size()) {
        throw IoError("segment " + std::to_string(i) + " has the wrong number of values");
      }
      std::copy(values.begin(), values.end(), model.params.values().data() + seg.offset);
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed model file: ") + e.what());
  } catch (const ShapeError& e) {
    throw IoError(std::string("malformed model file: ") + e.what());
  }
}

void save_model(const Model& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write model file " + path);
  out << model_to_json(model) << '\n';
  if (!out) throw IoError("failed writing model file " + path);
}

Model load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open model file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return model_from_json(buf.str());
}

}  // namespace tulip
