#include "spikedet/network_io.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

namespace spikedet {

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'S', 'P', 'K', 'D', 'N', 'E', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

struct BlobWriter {
  std::vector<float> data;

  json add(const Tensor& t) {
    json j;
    j["shape"] = t.shape;
    j["offset"] = data.size();
    j["count"] = t.numel();
    data.insert(data.end(), t.data.begin(), t.data.end());
    return j;
  }
};

struct BlobReader {
  std::vector<float> data;

  Tensor get(const json& j) const {
    const std::size_t off = j.at("offset").get<std::size_t>();
    const std::size_t count = j.at("count").get<std::size_t>();
    if (off + count > data.size()) throw std::runtime_error("network file: blob out of range");
    Tensor t;
    t.shape = j.at("shape").get<std::vector<int>>();
    t.data.assign(data.begin() + static_cast<std::ptrdiff_t>(off),
                  data.begin() + static_cast<std::ptrdiff_t>(off + count));
    if (t.numel() != count) throw std::runtime_error("network file: blob shape mismatch");
    return t;
  }
};

const char* band_name(SteBand b) { return b == SteBand::kCentered ? "centered" : "wide"; }

SteBand band_from(const std::string& s) {
  if (s == "centered") return SteBand::kCentered;
  if (s == "wide") return SteBand::kWide;
  throw std::runtime_error("network file: unknown ste band '" + s + "'");
}

json layer_to_json(const LayerSpec& L, BlobWriter& blobs) {
  json j;
  j["name"] = L.name;
  j["kind"] = to_string(L.kind);
  j["inputs"] = L.inputs;
  switch (L.kind) {
    case LayerKind::kConv:
      j["in_channels"] = L.conv.in_channels;
      j["out_channels"] = L.conv.out_channels;
      j["kernel_size"] = L.conv.kernel_size;
      j["stride"] = L.conv.stride;
      j["padding"] = L.conv.padding;
      j["weights"] = blobs.add(L.conv.weights);
      j["bias"] = blobs.add(L.conv.bias);
      break;
    case LayerKind::kBatchNorm:
      j["epsilon"] = L.bn.epsilon;
      j["gamma"] = blobs.add(L.bn.gamma);
      j["beta"] = blobs.add(L.bn.beta);
      j["running_mean"] = blobs.add(L.bn.running_mean);
      j["running_var"] = blobs.add(L.bn.running_var);
      break;
    case LayerKind::kActivation:
      j["activation"] = to_string(L.act.kind);
      switch (L.act.kind) {
        case ActivationKind::kLeakyRelu: j["slope"] = L.act.leaky_slope; break;
        case ActivationKind::kQcfs:
          j["lambda"] = L.act.qcfs.lambda;
          j["L"] = L.act.qcfs.L;
          j["phi"] = L.act.qcfs.phi;
          j["band"] = band_name(L.act.qcfs.band);
          break;
        case ActivationKind::kIfNeuron: j["theta"] = L.act.theta; break;
      }
      break;
    case LayerKind::kAvgPool:
    case LayerKind::kMaxPool:
      j["k"] = L.pool.k;
      j["s"] = L.pool.s;
      break;
    case LayerKind::kUpsample:
      j["factor"] = L.upsample.factor;
      break;
    case LayerKind::kConcat:
      break;
    case LayerKind::kDetectHead: {
      j["class_count"] = L.head.class_count;
      j["stride"] = L.head.stride;
      json anchors = json::array();
      for (const Anchor& a : L.head.anchors) anchors.push_back({a.w, a.h});
      j["anchors"] = anchors;
      break;
    }
  }
  return j;
}

LayerSpec layer_from_json(const json& j, const BlobReader& blobs) {
  LayerSpec L;
  L.name = j.at("name").get<std::string>();
  L.inputs = j.at("inputs").get<std::vector<int>>();
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "conv") {
    L.kind = LayerKind::kConv;
    L.conv.in_channels = j.at("in_channels").get<int>();
    L.conv.out_channels = j.at("out_channels").get<int>();
    L.conv.kernel_size = j.at("kernel_size").get<int>();
    L.conv.stride = j.at("stride").get<int>();
    L.conv.padding = j.at("padding").get<int>();
    L.conv.weights = blobs.get(j.at("weights"));
    L.conv.bias = blobs.get(j.at("bias"));
  } else if (kind == "batchnorm") {
    L.kind = LayerKind::kBatchNorm;
    L.bn.epsilon = j.at("epsilon").get<float>();
    L.bn.gamma = blobs.get(j.at("gamma"));
    L.bn.beta = blobs.get(j.at("beta"));
    L.bn.running_mean = blobs.get(j.at("running_mean"));
    L.bn.running_var = blobs.get(j.at("running_var"));
  } else if (kind == "activation") {
    L.kind = LayerKind::kActivation;
    const std::string act = j.at("activation").get<std::string>();
    if (act == "leaky_relu") {
      L.act.kind = ActivationKind::kLeakyRelu;
      L.act.leaky_slope = j.at("slope").get<float>();
    } else if (act == "qcfs") {
      L.act.kind = ActivationKind::kQcfs;
      L.act.qcfs.lambda = j.at("lambda").get<float>();
      L.act.qcfs.L = j.at("L").get<int>();
      L.act.qcfs.phi = j.at("phi").get<float>();
      L.act.qcfs.band = band_from(j.value("band", "centered"));
    } else if (act == "if_neuron") {
      L.act.kind = ActivationKind::kIfNeuron;
      L.act.theta = j.at("theta").get<float>();
    } else {
      throw std::runtime_error("network file: unknown activation '" + act + "'");
    }
  } else if (kind == "avgpool" || kind == "maxpool") {
    L.kind = kind == "avgpool" ? LayerKind::kAvgPool : LayerKind::kMaxPool;
    L.pool.k = j.at("k").get<int>();
    L.pool.s = j.at("s").get<int>();
  } else if (kind == "upsample-nearest") {
    L.kind = LayerKind::kUpsample;
    L.upsample.factor = j.at("factor").get<int>();
  } else if (kind == "concat") {
    L.kind = LayerKind::kConcat;
  } else if (kind == "detect-head") {
    L.kind = LayerKind::kDetectHead;
    L.head.class_count = j.at("class_count").get<int>();
    L.head.stride = j.at("stride").get<int>();
    for (const json& a : j.at("anchors"))
      L.head.anchors.push_back(Anchor{a.at(0).get<float>(), a.at(1).get<float>()});
  } else {
    throw std::runtime_error("network file: unknown layer kind '" + kind + "'");
  }
  return L;
}

template <typename T>
void write_pod(std::ofstream& f, const T& v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& f) {
  T v{};
  f.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

} // namespace

void save_network(const NetworkGraph& net, const std::string& path) {
  net.validate();
  BlobWriter blobs;
  json header;
  header["format"] = "spikedet-network";
  header["input_shape"] = net.input_shape;
  header["class_count"] = net.class_count;
  json layers = json::array();
  for (const LayerSpec& L : net.layers) layers.push_back(layer_to_json(L, blobs));
  header["layers"] = layers;

  const std::string hs = header.dump();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_network: cannot open '" + path + "' for writing");
  f.write(kMagic, sizeof(kMagic));
  write_pod(f, kVersion);
  write_pod(f, static_cast<std::uint32_t>(hs.size()));
  f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  f.write(reinterpret_cast<const char*>(blobs.data.data()),
          static_cast<std::streamsize>(blobs.data.size() * sizeof(float)));
  if (!f) throw std::runtime_error("save_network: write failed for '" + path + "'");
}

NetworkGraph load_network(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_network: cannot open '" + path + "'");
  char magic[8];
  f.read(magic, sizeof(magic));
  if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("load_network: '" + path + "' is not a network file");
  const auto version = read_pod<std::uint32_t>(f);
  if (version != kVersion)
    throw std::runtime_error("load_network: unsupported version " + std::to_string(version));
  const auto hlen = read_pod<std::uint32_t>(f);
  std::string hs(hlen, '\0');
  f.read(hs.data(), hlen);
  if (!f) throw std::runtime_error("load_network: truncated header");
  const json header = json::parse(hs);

  BlobReader blobs;
  {
    const std::streampos here = f.tellg();
    f.seekg(0, std::ios::end);
    const std::size_t bytes = static_cast<std::size_t>(f.tellg() - here);
    f.seekg(here);
    blobs.data.resize(bytes / sizeof(float));
    f.read(reinterpret_cast<char*>(blobs.data.data()),
           static_cast<std::streamsize>(blobs.data.size() * sizeof(float)));
  }

  NetworkGraph net;
  net.input_shape = header.at("input_shape").get<std::vector<int>>();
  net.class_count = header.at("class_count").get<int>();
  for (const json& j : header.at("layers")) net.layers.push_back(layer_from_json(j, blobs));
  net.validate();
  return net;
}

} // namespace spikedet
