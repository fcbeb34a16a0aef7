#include "i2md/dataset.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "binary_io.hpp"
#include "i2md/error.hpp"
#include "i2md/rng.hpp"

namespace i2md {
namespace {

constexpr char kMagic[8] = {'I', '2', 'M', 'D', 'S', 'K', 'E', 'L'};
constexpr std::uint32_t kVersion = 1;
constexpr const char* kCsvTag = "# i2md-skeleton";

constexpr std::uint64_t kPrototypeStream = 0x70726f746fULL;
constexpr std::uint64_t kInstanceStream = 0x696e7374ULL;

// Rest pose for humanoid9; other topologies get a generic chain layout.
std::vector<std::array<double, 3>> rest_pose(const Topology& topo) {
  if (topo == Topology::humanoid9()) {
    return {{0.0, 0.0, 0.0},   {0.0, 0.5, 0.0},   {0.0, 0.8, 0.0},  {-0.3, 0.4, 0.0}, {-0.5, 0.2, 0.0},
            {0.3, 0.4, 0.0},   {0.5, 0.2, 0.0},   {-0.15, -0.8, 0.0}, {0.15, -0.8, 0.0}};
  }
  std::vector<std::array<double, 3>> pose(topo.joint_count());
  for (std::size_t j = 0; j < pose.size(); ++j) {
    const int p = topo.parent(j);
    if (p < 0) continue;
    const auto& pp = pose[static_cast<std::size_t>(p)];
    const double angle = 0.7 * static_cast<double>(j);
    pose[j] = {pp[0] + 0.3 * std::cos(angle), pp[1] + 0.3 * std::sin(angle), pp[2]};
  }
  return pose;
}

struct Prototype {
  // Per joint: integer cycle count; per joint and axis: amplitude and phase.
  std::vector<int> cycles;
  std::vector<double> amplitude;
  std::vector<double> phase;
};

Prototype make_prototype(const DatasetConfig& config, std::size_t label) {
  Rng rng(derive_seed(config.seed, kPrototypeStream, label));
  const std::size_t j_count = config.topology.joint_count();
  Prototype p;
  p.cycles.resize(j_count);
  p.amplitude.resize(j_count * 3);
  p.phase.resize(j_count * 3);
  for (std::size_t j = 0; j < j_count; ++j) {
    p.cycles[j] = 1 + static_cast<int>(rng() % 2);
    const double joint_scale = j == config.topology.root() ? 0.3 : 1.0;
    for (std::size_t a = 0; a < 3; ++a) {
      p.amplitude[j * 3 + a] = joint_scale * uniform(rng, 0.0, config.amplitude);
      p.phase[j * 3 + a] = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    }
  }
  return p;
}

SkeletonSequence make_instance(const DatasetConfig& config, const Prototype& proto,
                               const std::vector<std::array<double, 3>>& rest, int label,
                               std::uint64_t instance_id, std::uint64_t split, std::uint64_t index) {
  Rng rng(derive_seed(config.seed, kInstanceStream + split, index));
  const std::size_t t_count = config.frames;
  const std::size_t j_count = config.topology.joint_count();
  const double angle = uniform(rng, -config.rotation_max_rad, config.rotation_max_rad);
  const double c = std::cos(angle), s = std::sin(angle);
  std::normal_distribution<double> noise(0.0, config.noise_std > 0.0 ? config.noise_std : 1.0);

  SkeletonSequence seq(t_count, j_count, label, instance_id);
  for (std::size_t t = 0; t < t_count; ++t) {
    const double u = 2.0 * std::numbers::pi * static_cast<double>(t) / static_cast<double>(t_count);
    for (std::size_t j = 0; j < j_count; ++j) {
      std::array<double, 3> v{};
      for (std::size_t a = 0; a < 3; ++a) {
        v[a] = rest[j][a] + proto.amplitude[j * 3 + a] *
                                std::sin(static_cast<double>(proto.cycles[j]) * u + proto.phase[j * 3 + a]);
      }
      // Rotation about the vertical (y) axis.
      seq.at(t, j, 0) = c * v[0] + s * v[2];
      seq.at(t, j, 1) = v[1];
      seq.at(t, j, 2) = -s * v[0] + c * v[2];
    }
  }
  if (config.noise_std > 0.0) {
    for (auto& v : seq.coords) v += noise(rng);
  }
  return seq;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Dataset read_binary(std::istream& is, const std::filesystem::path& path) {
  if (io::read_pod<std::uint32_t>(is) != kVersion) throw IoError("unsupported dataset version in " + path.string());
  const auto j_count = io::read_pod<std::uint32_t>(is);
  const auto t_count = io::read_pod<std::uint32_t>(is);
  const auto classes = io::read_pod<std::uint32_t>(is);
  const auto n_train = io::read_pod<std::uint64_t>(is);
  const auto n_test = io::read_pod<std::uint64_t>(is);
  std::vector<int> parents(j_count);
  for (auto& p : parents) p = io::read_pod<std::int32_t>(is);
  Dataset ds{Topology(std::move(parents)), classes, {}, {}};
  for (std::uint64_t i = 0; i < n_train + n_test; ++i) {
    const auto label = io::read_pod<std::int32_t>(is);
    const auto id = io::read_pod<std::uint64_t>(is);
    SkeletonSequence seq(t_count, j_count, label, id);
    is.read(reinterpret_cast<char*>(seq.coords.data()), static_cast<std::streamsize>(seq.coords.size() * sizeof(double)));
    if (!is) throw IoError("truncated dataset file " + path.string());
    (i < n_train ? ds.train : ds.test).push_back(std::move(seq));
  }
  return ds;
}

std::size_t parse_header_field(const std::string& header, const std::string& key) {
  const auto pos = header.find(" " + key + "=");
  if (pos == std::string::npos) throw IoError("CSV header missing '" + key + "'");
  return std::stoull(header.substr(pos + key.size() + 2));
}

Dataset read_csv(std::istream& is, const std::filesystem::path& path) {
  std::string header;
  std::getline(is, header);
  const auto j_count = parse_header_field(header, "J");
  const auto t_count = parse_header_field(header, "T");
  const auto classes = parse_header_field(header, "classes");
  const auto ppos = header.find(" parents=");
  if (ppos == std::string::npos) throw IoError("CSV header missing 'parents' in " + path.string());
  std::vector<int> parents;
  std::stringstream ps(header.substr(ppos + 9));
  for (std::string tok; std::getline(ps, tok, ';');) parents.push_back(std::stoi(tok));
  if (parents.size() != j_count) throw IoError("CSV parents length does not match J");
  Dataset ds{Topology(std::move(parents)), classes, {}, {}};

  std::string line;
  std::getline(is, line);  // column names
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ls(line);
    std::string split, field;
    std::getline(ls, split, ',');
    std::getline(ls, field, ',');
    const auto id = std::stoull(field);
    std::getline(ls, field, ',');
    const int label = std::stoi(field);
    SkeletonSequence seq(t_count, j_count, label, id);
    for (auto& v : seq.coords) {
      if (!std::getline(ls, field, ',')) throw IoError("short CSV row in " + path.string());
      v = std::stod(field);
    }
    if (split == "train") {
      ds.train.push_back(std::move(seq));
    } else if (split == "test") {
      ds.test.push_back(std::move(seq));
    } else {
      throw IoError("unknown split '" + split + "' in " + path.string());
    }
  }
  return ds;
}

}  // namespace

void DatasetConfig::validate() const {
  if (num_classes < 2) throw ConfigError("dataset needs at least 2 classes");
  if (frames < 2) throw ConfigError("dataset needs at least 2 frames");
  if (train_per_class == 0) throw ConfigError("dataset train_per_class must be positive");
  if (!(noise_std >= 0.0)) throw ConfigError("dataset noise_std must be >= 0");
  if (!(rotation_max_rad >= 0.0)) throw ConfigError("dataset rotation_max_rad must be >= 0");
  if (!(amplitude >= 0.0)) throw ConfigError("dataset amplitude must be >= 0");
}

std::size_t Dataset::frames() const {
  if (!train.empty()) return train.front().frames;
  if (!test.empty()) return test.front().frames;
  return 0;
}

Dataset generate_dataset(const DatasetConfig& config) {
  config.validate();
  const auto rest = rest_pose(config.topology);
  Dataset ds{config.topology, config.num_classes, {}, {}};
  std::uint64_t next_id = 0;
  std::vector<Prototype> protos;
  for (std::size_t c = 0; c < config.num_classes; ++c) protos.push_back(make_prototype(config, c));
  for (std::size_t c = 0; c < config.num_classes; ++c) {
    for (std::size_t i = 0; i < config.train_per_class; ++i) {
      ds.train.push_back(make_instance(config, protos[c], rest, static_cast<int>(c), next_id++, 0,
                                       c * config.train_per_class + i));
    }
  }
  for (std::size_t c = 0; c < config.num_classes; ++c) {
    for (std::size_t i = 0; i < config.test_per_class; ++i) {
      ds.test.push_back(make_instance(config, protos[c], rest, static_cast<int>(c), next_id++, 1,
                                      c * config.test_per_class + i));
    }
  }
  return ds;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write(kMagic, sizeof kMagic);
  io::write_pod<std::uint32_t>(os, kVersion);
  io::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(dataset.topology.joint_count()));
  io::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(dataset.frames()));
  io::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(dataset.num_classes));
  io::write_pod<std::uint64_t>(os, dataset.train.size());
  io::write_pod<std::uint64_t>(os, dataset.test.size());
  for (int p : dataset.topology.parents()) io::write_pod<std::int32_t>(os, p);
  for (const auto* split : {&dataset.train, &dataset.test}) {
    for (const auto& s : *split) {
      io::write_pod<std::int32_t>(os, s.label);
      io::write_pod<std::uint64_t>(os, s.instance_id);
      os.write(reinterpret_cast<const char*>(s.coords.data()),
               static_cast<std::streamsize>(s.coords.size() * sizeof(double)));
    }
  }
  if (!os) throw IoError("failed writing " + path.string());
}

void save_dataset_csv(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << kCsvTag << " J=" << dataset.topology.joint_count() << " T=" << dataset.frames()
     << " classes=" << dataset.num_classes << " train=" << dataset.train.size() << " test=" << dataset.test.size()
     << " parents=";
  for (std::size_t j = 0; j < dataset.topology.joint_count(); ++j) {
    if (j) os << ';';
    os << dataset.topology.parent(j);
  }
  os << "\nsplit,instance_id,label";
  const std::size_t width = dataset.frames() * dataset.topology.joint_count() * 3;
  for (std::size_t i = 0; i < width; ++i) os << ",c" << i;
  os << '\n';
  for (const auto& [name, split] : {std::pair{"train", &dataset.train}, std::pair{"test", &dataset.test}}) {
    for (const auto& s : *split) {
      os << name << ',' << s.instance_id << ',' << s.label;
      for (double v : s.coords) os << ',' << format_double(v);
      os << '\n';
    }
  }
  if (!os) throw IoError("failed writing " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  char magic[sizeof kMagic] = {};
  is.read(magic, sizeof magic);
  if (is && std::equal(std::begin(magic), std::end(magic), std::begin(kMagic))) return read_binary(is, path);
  is.clear();
  is.seekg(0);
  if (std::string head(std::char_traits<char>::length(kCsvTag), '\0');
      is.read(head.data(), static_cast<std::streamsize>(head.size())) && head == kCsvTag) {
    is.seekg(0);
    return read_csv(is, path);
  }
  throw IoError(path.string() + " is not a skeleton dataset file");
}

}  // namespace i2md
