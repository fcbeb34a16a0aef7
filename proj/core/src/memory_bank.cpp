#include "i2md/memory_bank.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "binary_io.hpp"
#include "i2md/error.hpp"

namespace i2md {

MemoryBank::MemoryBank(std::size_t capacity, std::size_t key_dim, std::size_t value_dim)
    : capacity_(capacity),
      key_dim_(key_dim),
      value_dim_(value_dim),
      keys_(capacity * key_dim, 0.0),
      values_(capacity * value_dim, 0.0),
      tags_(capacity, 0) {
  if (capacity == 0 || key_dim == 0) throw ContractError("memory bank needs capacity >= 1 and key_dim >= 1");
}

void MemoryBank::enqueue(const Tensor& keys, const Tensor* values, std::span<const std::uint64_t> tags) {
  if (keys.rank() != 2 || keys.dim(1) != key_dim_) {
    throw DimensionError("bank enqueue: keys " + shape_string(keys.shape()) + " for key_dim " +
                         std::to_string(key_dim_));
  }
  const std::size_t batch = keys.dim(0);
  if (batch > capacity_) {
    throw ContractError("bank enqueue: batch " + std::to_string(batch) + " exceeds capacity " +
                        std::to_string(capacity_));
  }
  if (tags.size() != batch) throw ContractError("bank enqueue: tag count differs from batch size");
  if (has_values() != (values != nullptr && values->defined())) {
    throw ContractError(has_values() ? "bank enqueue: values required" : "bank enqueue: keys-only bank got values");
  }
  if (values && values->defined() && (values->rank() != 2 || values->dim(0) != batch || values->dim(1) != value_dim_)) {
    throw DimensionError("bank enqueue: values " + shape_string(values->shape()) + " for batch " +
                         std::to_string(batch) + " x " + std::to_string(value_dim_));
  }
  const auto kd = keys.data();
  for (std::size_t r = 0; r < batch; ++r) {
    double sq = 0.0;
    for (std::size_t c = 0; c < key_dim_; ++c) sq += kd[r * key_dim_ + c] * kd[r * key_dim_ + c];
    if (!(std::abs(std::sqrt(sq) - 1.0) <= kBankUnitNormTol)) {
      throw ContractError("bank enqueue: key row " + std::to_string(r) + " has norm " + std::to_string(std::sqrt(sq)));
    }
  }
  for (std::size_t r = 0; r < batch; ++r) {
    const std::size_t slot = cursor_;
    std::copy_n(kd.begin() + static_cast<std::ptrdiff_t>(r * key_dim_), key_dim_, keys_.begin() + slot * key_dim_);
    if (has_values()) {
      const auto vd = values->data();
      std::copy_n(vd.begin() + static_cast<std::ptrdiff_t>(r * value_dim_), value_dim_,
                  values_.begin() + slot * value_dim_);
    }
    tags_[slot] = tags[r];
    cursor_ = (cursor_ + 1) % capacity_;
  }
  fill_ = std::min(capacity_, fill_ + batch);
}

TopK MemoryBank::top_k(std::span<const double> query, std::size_t k) const {
  if (query.size() != key_dim_) {
    throw DimensionError("top_k: query length " + std::to_string(query.size()) + " for key_dim " +
                         std::to_string(key_dim_));
  }
  if (k > fill_) {
    throw ContractError("top_k: K=" + std::to_string(k) + " exceeds fill count " + std::to_string(fill_));
  }
  std::vector<double> sims(fill_);
  for (std::size_t s = 0; s < fill_; ++s) {
    const double* row = keys_.data() + s * key_dim_;
    double acc = 0.0;
    for (std::size_t c = 0; c < key_dim_; ++c) acc += query[c] * row[c];
    sims[s] = acc;
  }
  std::vector<std::size_t> order(fill_);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto better = [&](std::size_t a, std::size_t b) { return sims[a] > sims[b] || (sims[a] == sims[b] && a < b); };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), better);
  TopK out;
  out.indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  out.similarities.reserve(k);
  for (auto s : out.indices) out.similarities.push_back(sims[s]);
  return out;
}

std::vector<TopK> MemoryBank::top_k_rows(const Tensor& queries, std::size_t k) const {
  if (queries.rank() != 2 || queries.dim(1) != key_dim_) {
    throw DimensionError("top_k_rows: queries " + shape_string(queries.shape()) + " for key_dim " +
                         std::to_string(key_dim_));
  }
  std::vector<TopK> out;
  out.reserve(queries.dim(0));
  const auto d = queries.data();
  for (std::size_t r = 0; r < queries.dim(0); ++r) out.push_back(top_k(d.subspan(r * key_dim_, key_dim_), k));
  return out;
}

void MemoryBank::check_slot(std::size_t slot) const {
  if (slot >= fill_) {
    throw ContractError("bank slot " + std::to_string(slot) + " outside [0, " + std::to_string(fill_) + ")");
  }
}

Tensor MemoryBank::gather_keys(std::span<const std::size_t> slots) const {
  std::vector<double> out;
  out.reserve(slots.size() * key_dim_);
  for (auto s : slots) {
    check_slot(s);
    out.insert(out.end(), keys_.begin() + static_cast<std::ptrdiff_t>(s * key_dim_),
               keys_.begin() + static_cast<std::ptrdiff_t>((s + 1) * key_dim_));
  }
  return Tensor({slots.size(), key_dim_}, std::move(out));
}

Tensor MemoryBank::gather_values(std::span<const std::size_t> slots) const {
  if (!has_values()) throw ContractError("gather_values on a keys-only bank");
  std::vector<double> out;
  out.reserve(slots.size() * value_dim_);
  for (auto s : slots) {
    check_slot(s);
    out.insert(out.end(), values_.begin() + static_cast<std::ptrdiff_t>(s * value_dim_),
               values_.begin() + static_cast<std::ptrdiff_t>((s + 1) * value_dim_));
  }
  return Tensor({slots.size(), value_dim_}, std::move(out));
}

Tensor MemoryBank::keys_tensor() const {
  return Tensor({fill_, key_dim_}, std::vector<double>(keys_.begin(), keys_.begin() + static_cast<std::ptrdiff_t>(fill_ * key_dim_)));
}

std::span<const double> MemoryBank::key(std::size_t slot) const {
  check_slot(slot);
  return std::span<const double>(keys_).subspan(slot * key_dim_, key_dim_);
}

std::span<const double> MemoryBank::value(std::size_t slot) const {
  if (!has_values()) throw ContractError("value() on a keys-only bank");
  check_slot(slot);
  return std::span<const double>(values_).subspan(slot * value_dim_, value_dim_);
}

std::uint64_t MemoryBank::tag(std::size_t slot) const {
  check_slot(slot);
  return tags_[slot];
}

std::vector<std::size_t> MemoryBank::slots_oldest_first() const {
  std::vector<std::size_t> out(fill_);
  const std::size_t start = full() ? cursor_ : 0;
  for (std::size_t i = 0; i < fill_; ++i) out[i] = (start + i) % capacity_;
  return out;
}

void MemoryBank::write(std::ostream& os) const {
  io::write_pod<std::uint64_t>(os, capacity_);
  io::write_pod<std::uint64_t>(os, key_dim_);
  io::write_pod<std::uint64_t>(os, value_dim_);
  io::write_pod<std::uint64_t>(os, fill_);
  io::write_pod<std::uint64_t>(os, cursor_);
  io::write_vector(os, keys_);
  io::write_vector(os, values_);
  io::write_vector(os, tags_);
}

MemoryBank MemoryBank::read(std::istream& is) {
  MemoryBank b;
  b.capacity_ = io::read_pod<std::uint64_t>(is);
  b.key_dim_ = io::read_pod<std::uint64_t>(is);
  b.value_dim_ = io::read_pod<std::uint64_t>(is);
  b.fill_ = io::read_pod<std::uint64_t>(is);
  b.cursor_ = io::read_pod<std::uint64_t>(is);
  b.keys_ = io::read_vector<double>(is);
  b.values_ = io::read_vector<double>(is);
  b.tags_ = io::read_vector<std::uint64_t>(is);
  if (b.capacity_ == 0 || b.fill_ > b.capacity_ || b.cursor_ >= b.capacity_ ||
      b.keys_.size() != b.capacity_ * b.key_dim_ || b.values_.size() != b.capacity_ * b.value_dim_ ||
      b.tags_.size() != b.capacity_) {
    throw IoError("corrupt memory bank record");
  }
  return b;
}

const char* branch_name(Branch b) { return b == Branch::Instance ? "idb" : "cdb"; }

BankGroup::BankGroup(std::vector<Modality> modalities, std::size_t capacity, std::size_t key_dim,
                     std::size_t value_dim)
    : modalities_(std::move(modalities)), capacity_(capacity) {
  if (modalities_.empty()) throw ContractError("bank group needs at least one modality");
  for (auto m : modalities_) {
    if (!banks_.emplace(key_of(m, Branch::Instance), MemoryBank(capacity, key_dim, value_dim)).second) {
      throw ContractError("bank group: duplicate modality " + std::string(modality_name(m)));
    }
    banks_.emplace(key_of(m, Branch::Cluster), MemoryBank(capacity, key_dim, 0));
  }
}

std::size_t BankGroup::fill_count() const { return banks_.empty() ? 0 : banks_.begin()->second.fill_count(); }

const MemoryBank& BankGroup::bank(Modality m, Branch b) const {
  auto it = banks_.find(key_of(m, b));
  if (it == banks_.end()) {
    throw ContractError("no " + std::string(branch_name(b)) + " bank for modality " + std::string(modality_name(m)));
  }
  return it->second;
}

void BankGroup::enqueue_batch(std::span<const BankWrite> writes, std::span<const std::uint64_t> tags) {
  if (writes.size() != banks_.size()) {
    throw ContractError("enqueue_batch: " + std::to_string(writes.size()) + " writes for " +
                        std::to_string(banks_.size()) + " banks");
  }
  std::map<Key, const BankWrite*> by_bank;
  for (const auto& w : writes) {
    const Key k = key_of(w.modality, w.branch);
    if (!banks_.count(k)) throw ContractError("enqueue_batch: write for a bank outside the group");
    if (!by_bank.emplace(k, &w).second) throw ContractError("enqueue_batch: two writes for one bank");
    if (!w.keys.defined() || w.keys.rank() != 2 || w.keys.dim(0) != tags.size()) {
      throw ContractError("enqueue_batch: unequal batch sizes across banks");
    }
  }
  // Dry run on copies so a bad row leaves every bank untouched.
  std::map<Key, MemoryBank> next = banks_;
  for (auto& [k, bank] : next) {
    const BankWrite* w = by_bank.at(k);
    bank.enqueue(w->keys, w->values.defined() ? &w->values : nullptr, tags);
  }
  banks_ = std::move(next);
}

void BankGroup::write(std::ostream& os) const {
  io::write_pod<std::uint64_t>(os, capacity_);
  io::write_pod<std::uint64_t>(os, modalities_.size());
  for (auto m : modalities_) io::write_pod<std::int32_t>(os, static_cast<std::int32_t>(m));
  io::write_pod<std::uint64_t>(os, banks_.size());
  for (const auto& [k, bank] : banks_) {
    io::write_pod<std::int32_t>(os, k.first);
    io::write_pod<std::int32_t>(os, k.second);
    bank.write(os);
  }
}

BankGroup BankGroup::read(std::istream& is) {
  BankGroup g;
  g.capacity_ = io::read_pod<std::uint64_t>(is);
  const auto n_mod = io::read_pod<std::uint64_t>(is);
  if (n_mod > 3) throw IoError("corrupt bank group record");
  for (std::uint64_t i = 0; i < n_mod; ++i) {
    const auto m = io::read_pod<std::int32_t>(is);
    if (m < 0 || m > 2) throw IoError("corrupt bank group record");
    g.modalities_.push_back(static_cast<Modality>(m));
  }
  const auto n_banks = io::read_pod<std::uint64_t>(is);
  if (n_banks != 2 * n_mod) throw IoError("corrupt bank group record");
  for (std::uint64_t i = 0; i < n_banks; ++i) {
    const auto m = io::read_pod<std::int32_t>(is);
    const auto b = io::read_pod<std::int32_t>(is);
    g.banks_.emplace(Key{m, b}, MemoryBank::read(is));
  }
  return g;
}

}  // namespace i2md
