#include "ctxf/forest_index.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <queue>
#include <sstream>

#include "ctxf/error.hpp"
#include "ctxf/parallel.hpp"
#include "ctxf/rng.hpp"

namespace ctxf {

namespace {

constexpr char kMagic[4] = {'K', 'D', 'F', '1'};

float l2_squared(const float* a, const float* b) {
  float acc = 0.0f;
  for (std::size_t i = 0; i < kDescriptorDims; ++i) {
    const float d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

ForestIndex::Tree build_tree(const std::vector<float>& vectors, std::size_t n,
                             const ForestOptions& opts, Rng rng) {
  ForestIndex::Tree tree;
  tree.order.resize(n);
  std::iota(tree.order.begin(), tree.order.end(), 0u);
  tree.nodes.reserve(2 * (n / static_cast<std::size_t>(opts.leaf_size) + 1));

  struct Work {
    std::uint32_t node, begin, end;
  };
  tree.nodes.push_back({});
  std::vector<Work> stack{{0, 0, static_cast<std::uint32_t>(n)}};
  std::array<double, kDescriptorDims> mean{};
  std::array<double, kDescriptorDims> var{};
  std::array<int, kDescriptorDims> dims{};

  while (!stack.empty()) {
    const Work w = stack.back();
    stack.pop_back();
    const std::uint32_t count = w.end - w.begin;
    if (count <= static_cast<std::uint32_t>(opts.leaf_size)) {
      tree.nodes[w.node] = {-1, 0.0f, w.begin, w.end};
      continue;
    }
    // Variance on an evenly spaced subsample of the node's members.
    const std::uint32_t samples = std::min<std::uint32_t>(count, static_cast<std::uint32_t>(opts.variance_sample));
    mean.fill(0.0);
    var.fill(0.0);
    for (std::uint32_t s = 0; s < samples; ++s) {
      const std::uint32_t rec = tree.order[w.begin + static_cast<std::uint64_t>(s) * count / samples];
      const float* v = &vectors[static_cast<std::size_t>(rec) * kDescriptorDims];
      for (std::size_t d = 0; d < kDescriptorDims; ++d) mean[d] += v[d];
    }
    for (double& m : mean) m /= samples;
    for (std::uint32_t s = 0; s < samples; ++s) {
      const std::uint32_t rec = tree.order[w.begin + static_cast<std::uint64_t>(s) * count / samples];
      const float* v = &vectors[static_cast<std::size_t>(rec) * kDescriptorDims];
      for (std::size_t d = 0; d < kDescriptorDims; ++d) {
        const double diff = v[d] - mean[d];
        var[d] += diff * diff;
      }
    }
    std::iota(dims.begin(), dims.end(), 0);
    const int top = std::clamp(opts.candidate_dims, 1, static_cast<int>(kDescriptorDims));
    std::partial_sort(dims.begin(), dims.begin() + top, dims.end(), [&](int a, int b) {
      return var[static_cast<std::size_t>(a)] != var[static_cast<std::size_t>(b)]
                 ? var[static_cast<std::size_t>(a)] > var[static_cast<std::size_t>(b)]
                 : a < b;
    });
    const int dim = dims[uniform_index(rng, static_cast<std::uint64_t>(top))];

    const std::uint32_t mid = w.begin + count / 2;
    auto value = [&](std::uint32_t rec) {
      return vectors[static_cast<std::size_t>(rec) * kDescriptorDims + static_cast<std::size_t>(dim)];
    };
    std::nth_element(tree.order.begin() + w.begin, tree.order.begin() + mid,
                     tree.order.begin() + w.end, [&](std::uint32_t a, std::uint32_t b) {
                       const float va = value(a), vb = value(b);
                       return va != vb ? va < vb : a < b;
                     });
    const auto left = static_cast<std::uint32_t>(tree.nodes.size());
    tree.nodes.push_back({});
    tree.nodes.push_back({});
    tree.nodes[w.node] = {dim, value(tree.order[mid]), left, left + 1};
    stack.push_back({left + 1, mid, w.end});
    stack.push_back({left, w.begin, mid});
  }
  return tree;
}

// Per-thread "visited" stamps so a record reached through several trees is
// evaluated once per query without clearing a bitmap each time.
struct VisitStamps {
  std::vector<std::uint32_t> stamps;
  std::uint32_t current = 0;

  void begin(std::size_t n) {
    if (stamps.size() < n) stamps.assign(n, 0);
    if (++current == 0) {
      std::fill(stamps.begin(), stamps.end(), 0);
      current = 1;
    }
  }
  bool visit(std::uint32_t rec) {
    if (stamps[rec] == current) return false;
    stamps[rec] = current;
    return true;
  }
};

thread_local VisitStamps tls_stamps;

class KnnResults {
 public:
  explicit KnnResults(std::size_t k) : k_(k) {}
  bool full() const { return best_.size() >= k_; }
  float worst() const { return best_.back().second; }
  void add(std::uint32_t rec, std::uint64_t /*image*/, float d2) {
    if (full() && !(d2 < worst() || (d2 == worst() && rec < best_.back().first))) return;
    auto pos = std::upper_bound(best_.begin(), best_.end(), std::make_pair(rec, d2),
                                [](const auto& a, const auto& b) {
                                  return a.second != b.second ? a.second < b.second : a.first < b.first;
                                });
    best_.insert(pos, {rec, d2});
    if (best_.size() > k_) best_.pop_back();
  }
  const std::vector<std::pair<std::uint32_t, float>>& items() const { return best_; }

 private:
  std::size_t k_;
  std::vector<std::pair<std::uint32_t, float>> best_;
};

class DistinctImageResults {
 public:
  DistinctImageResults(std::size_t k, const std::vector<std::uint64_t>& image_ids)
      : k_(k), image_ids_(image_ids) {}
  bool full() const { return best_.size() >= k_; }
  float worst() const { return best_.back().second; }
  void add(std::uint32_t rec, std::uint64_t image, float d2) {
    auto same = std::find_if(best_.begin(), best_.end(),
                             [&](const auto& e) { return image_ids_[e.first] == image; });
    if (same != best_.end()) {
      if (!(d2 < same->second || (d2 == same->second && rec < same->first))) return;
      best_.erase(same);
    } else if (full() && !(d2 < worst() || (d2 == worst() && rec < best_.back().first))) {
      return;
    }
    auto pos = std::upper_bound(best_.begin(), best_.end(), std::make_pair(rec, d2),
                                [](const auto& a, const auto& b) {
                                  return a.second != b.second ? a.second < b.second : a.first < b.first;
                                });
    best_.insert(pos, {rec, d2});
    if (best_.size() > k_) best_.pop_back();
  }
  const std::vector<std::pair<std::uint32_t, float>>& items() const { return best_; }

 private:
  std::size_t k_;
  const std::vector<std::uint64_t>& image_ids_;
  std::vector<std::pair<std::uint32_t, float>> best_;
};

template <typename ResultSet>
std::vector<Neighbor> to_neighbors(const ResultSet& results) {
  std::vector<Neighbor> out;
  out.reserve(results.items().size());
  for (const auto& [rec, d2] : results.items()) out.push_back({rec, std::sqrt(d2)});
  return out;
}

// Little-endian binary helpers; the reader checks bounds on every access.
class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}
  template <typename T>
  void put(const T& v) {
    os_.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void bytes(const void* p, std::size_t n) { os_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }

 private:
  std::ostream& os_;
};

class Reader {
 public:
  Reader(const std::vector<char>& buf) : buf_(buf) {}
  template <typename T>
  T get() {
    T v;
    bytes(&v, sizeof v);
    return v;
  }
  void bytes(void* dst, std::size_t n) {
    if (n > buf_.size() - pos_) throw FormatError("index file truncated");
    std::memcpy(dst, buf_.data() + pos_, n);
    pos_ += n;
  }
  bool at_end() const { return pos_ == buf_.size(); }

 private:
  const std::vector<char>& buf_;
  std::size_t pos_ = 0;
};

}  // namespace

ForestIndex ForestIndex::build(std::vector<Descriptor> descriptors, const ForestOptions& opts,
                               const std::vector<ImageInfo>& images) {
  if (descriptors.empty()) throw IndexError("ForestIndex::build: empty descriptor stream");
  if (opts.trees < 1 || opts.leaf_size < 1) throw ParameterError("ForestIndex::build: bad options");
  if (descriptors.size() >= std::numeric_limits<std::uint32_t>::max()) {
    throw IndexError("ForestIndex::build: too many descriptors");
  }
  ForestIndex index;
  index.opts_ = opts;
  const std::size_t n = descriptors.size();
  index.vectors_.resize(n * kDescriptorDims);
  index.keypoints_.resize(n);
  index.image_ids_.resize(n);
  std::map<std::uint64_t, std::uint64_t> counts;
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(descriptors[i].vector.begin(), descriptors[i].vector.end(),
              index.vectors_.begin() + static_cast<std::ptrdiff_t>(i * kDescriptorDims));
    index.keypoints_[i] = descriptors[i].keypoint;
    index.image_ids_[i] = descriptors[i].image_id;
    ++counts[descriptors[i].image_id];
  }
  descriptors.clear();
  descriptors.shrink_to_fit();

  std::map<std::uint64_t, std::string> paths;
  for (const ImageInfo& info : images) paths[info.image_id] = info.path;
  for (const auto& [id, count] : counts) {
    auto it = paths.find(id);
    index.images_.push_back({id, it == paths.end() ? std::string{} : it->second, count});
  }

  index.trees_.resize(static_cast<std::size_t>(opts.trees));
  parallel_for(index.trees_.size(), [&](std::size_t t) {
    index.trees_[t] = build_tree(index.vectors_, n, opts, make_rng(opts.seed, "kdtree", t));
  });
  index.rebuild_lookup();
  return index;
}

void ForestIndex::rebuild_lookup() {
  image_slot_.clear();
  image_records_.clear();
  for (std::size_t i = 0; i < images_.size(); ++i) image_slot_[images_[i].image_id] = i;
  for (std::uint32_t r = 0; r < image_ids_.size(); ++r) image_records_[image_ids_[r]].push_back(r);
}

template <typename ResultSet>
void ForestIndex::search(std::span<const float> query, std::size_t checks,
                         ResultSet& results) const {
  if (query.size() != kDescriptorDims) throw ParameterError("knn: query must have 64 dims");
  struct Branch {
    float bound;
    std::uint32_t tree;
    std::uint32_t node;
    bool operator>(const Branch& o) const {
      if (bound != o.bound) return bound > o.bound;
      if (tree != o.tree) return tree > o.tree;
      return node > o.node;
    }
  };
  std::priority_queue<Branch, std::vector<Branch>, std::greater<>> heap;
  VisitStamps& stamps = tls_stamps;
  stamps.begin(record_count());
  std::size_t evaluated = 0;
  const float* q = query.data();

  auto descend = [&](std::uint32_t t, std::uint32_t node_id) {
    const Tree& tree = trees_[t];
    const Node* node = &tree.nodes[node_id];
    while (node->dim >= 0) {
      const float diff = q[node->dim] - node->split;
      const std::uint32_t near = diff < 0.0f ? node->a : node->b;
      const std::uint32_t far = diff < 0.0f ? node->b : node->a;
      const float bound = diff * diff;
      if (!results.full() || bound < results.worst()) heap.push({bound, t, far});
      node = &tree.nodes[near];
    }
    for (std::uint32_t i = node->a; i < node->b; ++i) {
      if (evaluated >= checks) return;
      const std::uint32_t rec = tree.order[i];
      if (!stamps.visit(rec)) continue;
      ++evaluated;
      results.add(rec, image_ids_[rec],
                  l2_squared(q, &vectors_[static_cast<std::size_t>(rec) * kDescriptorDims]));
    }
  };

  for (std::uint32_t t = 0; t < trees_.size() && evaluated < checks; ++t) descend(t, 0);
  while (!heap.empty() && evaluated < checks) {
    const Branch br = heap.top();
    heap.pop();
    if (results.full() && br.bound >= results.worst()) break;
    descend(br.tree, br.node);
  }
}

std::vector<Neighbor> ForestIndex::knn(std::span<const float> query, std::size_t k,
                                       std::size_t checks) const {
  if (k == 0) throw ParameterError("knn: k must be >= 1");
  KnnResults results(k);
  search(query, checks, results);
  return to_neighbors(results);
}

std::vector<Neighbor> ForestIndex::knn_distinct_images(std::span<const float> query,
                                                       std::size_t k, std::size_t checks) const {
  if (k == 0) throw ParameterError("knn: k must be >= 1");
  DistinctImageResults results(k, image_ids_);
  search(query, checks, results);
  return to_neighbors(results);
}

QueryResult ForestIndex::query_images(std::span<const Descriptor> probe, std::size_t n,
                                      std::size_t checks) const {
  if (probe.empty()) throw QueryError("query_images: empty probe descriptor list");
  if (n == 0) throw ParameterError("query_images: N must be >= 1");
  constexpr float kRatio = 0.8f;
  std::unordered_map<std::uint64_t, ImageVote> votes;
  for (const Descriptor& d : probe) {
    const auto nn = knn_distinct_images(d.vector, 2, checks);
    if (nn.empty()) continue;
    if (nn.size() == 2 && !(nn[0].distance < kRatio * nn[1].distance)) continue;
    const std::uint64_t img = image_ids_[nn[0].record];
    ImageVote& v = votes[img];
    v.image_id = img;
    ++v.votes;
    v.distance_sum += nn[0].distance;
  }
  QueryResult result;
  result.requested = n;
  result.ranked.reserve(votes.size());
  for (const auto& [id, v] : votes) result.ranked.push_back(v);
  std::sort(result.ranked.begin(), result.ranked.end(), [](const ImageVote& a, const ImageVote& b) {
    if (a.votes != b.votes) return a.votes > b.votes;
    if (a.distance_sum != b.distance_sum) return a.distance_sum < b.distance_sum;
    return a.image_id < b.image_id;
  });
  if (result.ranked.size() > n) result.ranked.resize(n);
  return result;
}

Descriptor ForestIndex::descriptor(std::uint32_t record) const {
  Descriptor d;
  const auto v = vector(record);
  std::copy(v.begin(), v.end(), d.vector.begin());
  d.keypoint = keypoints_[record];
  d.image_id = image_ids_[record];
  return d;
}

const ImageInfo* ForestIndex::image_info(std::uint64_t image_id) const {
  auto it = image_slot_.find(image_id);
  return it == image_slot_.end() ? nullptr : &images_[it->second];
}

std::vector<Descriptor> ForestIndex::image_descriptors(std::uint64_t image_id) const {
  std::vector<Descriptor> out;
  auto it = image_records_.find(image_id);
  if (it == image_records_.end()) return out;
  out.reserve(it->second.size());
  for (std::uint32_t r : it->second) out.push_back(descriptor(r));
  return out;
}

std::size_t ForestIndex::reachable_records(std::size_t t) const {
  const Tree& tree = trees_.at(t);
  std::size_t total = 0;
  std::vector<std::uint32_t> stack{0};
  while (!stack.empty()) {
    const Node& node = tree.nodes[stack.back()];
    stack.pop_back();
    if (node.dim < 0) {
      total += node.b - node.a;
    } else {
      stack.push_back(node.a);
      stack.push_back(node.b);
    }
  }
  return total;
}

bool ForestIndex::same_structure(const ForestIndex& o) const {
  if (trees_.size() != o.trees_.size() || vectors_ != o.vectors_ || image_ids_ != o.image_ids_) {
    return false;
  }
  for (std::size_t t = 0; t < trees_.size(); ++t) {
    const Tree& a = trees_[t];
    const Tree& b = o.trees_[t];
    if (a.order != b.order || a.nodes.size() != b.nodes.size()) return false;
    for (std::size_t i = 0; i < a.nodes.size(); ++i) {
      if (a.nodes[i].dim != b.nodes[i].dim || a.nodes[i].split != b.nodes[i].split ||
          a.nodes[i].a != b.nodes[i].a || a.nodes[i].b != b.nodes[i].b) {
        return false;
      }
    }
  }
  return true;
}

void ForestIndex::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write index " + path.string());
  Writer w(os);
  w.bytes(kMagic, 4);
  w.put(kFormatVersion);
  w.put(static_cast<std::uint32_t>(trees_.size()));
  w.put(static_cast<std::uint32_t>(opts_.leaf_size));
  w.put(static_cast<std::uint64_t>(record_count()));
  w.put(static_cast<std::uint32_t>(opts_.candidate_dims));
  w.put(static_cast<std::uint32_t>(opts_.variance_sample));
  w.put(opts_.seed);

  w.put(static_cast<std::uint64_t>(images_.size()));
  for (const ImageInfo& info : images_) {
    w.put(info.image_id);
    w.put(info.descriptor_count);
    w.put(static_cast<std::uint32_t>(info.path.size()));
    w.bytes(info.path.data(), info.path.size());
  }
  for (std::uint32_t r = 0; r < record_count(); ++r) write_descriptor(os, descriptor(r));
  for (const Tree& tree : trees_) {
    w.put(static_cast<std::uint64_t>(tree.nodes.size()));
    for (const Node& node : tree.nodes) {
      w.put(node.dim);
      w.put(node.split);
      w.put(node.a);
      w.put(node.b);
    }
    w.put(static_cast<std::uint64_t>(tree.order.size()));
    w.bytes(tree.order.data(), tree.order.size() * sizeof(std::uint32_t));
  }
  if (!os) throw IoError("short write on index " + path.string());
}

ForestIndex ForestIndex::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read index " + path.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  Reader r(buf);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("not a KDF1 index: " + path.string());
  const auto version = r.get<std::uint16_t>();
  if (version != kFormatVersion) {
    throw FormatError("index version mismatch: expected " + std::to_string(kFormatVersion) +
                      ", found " + std::to_string(version));
  }
  ForestIndex index;
  const auto trees = r.get<std::uint32_t>();
  index.opts_.trees = static_cast<int>(trees);
  index.opts_.leaf_size = static_cast<int>(r.get<std::uint32_t>());
  const auto records = r.get<std::uint64_t>();
  index.opts_.candidate_dims = static_cast<int>(r.get<std::uint32_t>());
  index.opts_.variance_sample = static_cast<int>(r.get<std::uint32_t>());
  index.opts_.seed = r.get<std::uint64_t>();
  if (records == 0 || records >= std::numeric_limits<std::uint32_t>::max() ||
      records > buf.size() / kDescriptorRecordBytes) {
    throw FormatError("index record count is inconsistent with the file size");
  }

  const auto image_count = r.get<std::uint64_t>();
  if (image_count > records) throw FormatError("index image table is inconsistent");
  for (std::uint64_t i = 0; i < image_count; ++i) {
    ImageInfo info;
    info.image_id = r.get<std::uint64_t>();
    info.descriptor_count = r.get<std::uint64_t>();
    const auto len = r.get<std::uint32_t>();
    info.path.resize(len);
    r.bytes(info.path.data(), len);
    index.images_.push_back(std::move(info));
  }

  index.vectors_.resize(records * kDescriptorDims);
  index.keypoints_.resize(records);
  index.image_ids_.resize(records);
  for (std::uint64_t i = 0; i < records; ++i) {
    std::array<char, kDescriptorRecordBytes> rec{};
    r.bytes(rec.data(), rec.size());
    std::istringstream one(std::string(rec.data(), rec.size()));
    Descriptor d;
    read_descriptor(one, d);
    std::copy(d.vector.begin(), d.vector.end(),
              index.vectors_.begin() + static_cast<std::ptrdiff_t>(i * kDescriptorDims));
    index.keypoints_[i] = d.keypoint;
    index.image_ids_[i] = d.image_id;
  }

  index.trees_.resize(trees);
  for (Tree& tree : index.trees_) {
    const auto nodes = r.get<std::uint64_t>();
    if (nodes == 0 || nodes > buf.size() / 16) throw FormatError("index tree is inconsistent");
    tree.nodes.resize(nodes);
    for (Node& node : tree.nodes) {
      node.dim = r.get<std::int32_t>();
      node.split = r.get<float>();
      node.a = r.get<std::uint32_t>();
      node.b = r.get<std::uint32_t>();
    }
    const auto order = r.get<std::uint64_t>();
    if (order != records) throw FormatError("index tree does not cover every record");
    tree.order.resize(order);
    r.bytes(tree.order.data(), order * sizeof(std::uint32_t));
    for (const Node& node : tree.nodes) {
      const bool ok = node.dim < 0
                          ? node.a <= node.b && node.b <= order
                          : node.dim < static_cast<std::int32_t>(kDescriptorDims) && node.a < nodes &&
                                node.b < nodes;
      if (!ok) throw FormatError("index tree node out of range");
    }
    for (std::uint32_t rec : tree.order) {
      if (rec >= records) throw FormatError("index leaf references a missing record");
    }
  }
  if (!r.at_end()) throw FormatError("trailing bytes after index payload");
  index.rebuild_lookup();
  return index;
}

}  // namespace ctxf
