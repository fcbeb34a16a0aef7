#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <vector>

#include "i2md/skeleton.hpp"
#include "i2md/tensor.hpp"

namespace i2md {

/// Tolerance on stored key norms.
inline constexpr double kBankUnitNormTol = 1e-6;

struct TopK {
  std::vector<std::size_t> indices;   // bank slots, best first
  std::vector<double> similarities;   // query . key, non-increasing
};

/// Fixed-capacity ring buffer of unit-norm keys with optional aligned values.
///
/// Slots are physical ring positions: before the bank is full, slots
/// [0, fill_count) are occupied; afterwards every slot is and the oldest
/// entry sits at `write_cursor()`. Each slot also carries a caller tag
/// (the source instance id) used to check cross-bank alignment.
///
/// Bank contents are plain values and never join a differentiation graph.
class MemoryBank {
 public:
  MemoryBank() = default;
  /// `value_dim == 0` creates a keys-only bank.
  MemoryBank(std::size_t capacity, std::size_t key_dim, std::size_t value_dim = 0);

  std::size_t capacity() const { return capacity_; }
  std::size_t key_dim() const { return key_dim_; }
  std::size_t value_dim() const { return value_dim_; }
  bool has_values() const { return value_dim_ > 0; }
  std::size_t fill_count() const { return fill_; }
  std::size_t write_cursor() const { return cursor_; }
  bool full() const { return fill_ == capacity_; }

  /// Writes rows of `keys` ([B, key_dim]) and, for banks with values,
  /// `values` ([B, value_dim]). Throws ContractError when B > capacity, a
  /// key is not unit-norm, or values are missing/unexpected.
  void enqueue(const Tensor& keys, const Tensor* values, std::span<const std::uint64_t> tags);

  /// Exact top-K by dot product; ties go to the lower slot.
  TopK top_k(std::span<const double> query, std::size_t k) const;
  /// One top_k per row of `queries` ([B, key_dim]).
  std::vector<TopK> top_k_rows(const Tensor& queries, std::size_t k) const;

  /// Detached [n, key_dim] / [n, value_dim] copies in index order.
  Tensor gather_keys(std::span<const std::size_t> slots) const;
  Tensor gather_values(std::span<const std::size_t> slots) const;
  /// All occupied keys in slot order, [fill_count, key_dim].
  Tensor keys_tensor() const;

  std::span<const double> key(std::size_t slot) const;
  std::span<const double> value(std::size_t slot) const;
  std::uint64_t tag(std::size_t slot) const;

  /// Occupied slots from oldest to newest.
  std::vector<std::size_t> slots_oldest_first() const;

  void write(std::ostream& os) const;
  static MemoryBank read(std::istream& is);

  bool operator==(const MemoryBank&) const = default;

 private:
  void check_slot(std::size_t slot) const;

  std::size_t capacity_ = 0;
  std::size_t key_dim_ = 0;
  std::size_t value_dim_ = 0;
  std::size_t fill_ = 0;
  std::size_t cursor_ = 0;
  std::vector<double> keys_;
  std::vector<double> values_;
  std::vector<std::uint64_t> tags_;
};

/// IDB: instance-level branch. CDB: cluster-level branch (cross-attention).
enum class Branch { Instance = 0, Cluster = 1 };

const char* branch_name(Branch b);

struct BankWrite {
  Modality modality;
  Branch branch;
  Tensor keys;    // [B, key_dim]
  Tensor values;  // [B, value_dim]; only for instance banks
};

/// One bank per (modality, branch). Instance banks store hidden embeddings
/// as values; cluster banks hold keys only. All banks share one write
/// schedule, so slot i refers to the same source sample everywhere.
class BankGroup {
 public:
  BankGroup() = default;
  BankGroup(std::vector<Modality> modalities, std::size_t capacity, std::size_t key_dim, std::size_t value_dim);

  const std::vector<Modality>& modalities() const { return modalities_; }
  std::size_t capacity() const { return capacity_; }
  std::size_t fill_count() const;
  bool full() const { return fill_count() == capacity_; }

  const MemoryBank& bank(Modality m, Branch b) const;

  /// Exactly one write per bank, all with the same batch size. Everything is
  /// validated before the first bank is touched.
  void enqueue_batch(std::span<const BankWrite> writes, std::span<const std::uint64_t> tags);

  void write(std::ostream& os) const;
  static BankGroup read(std::istream& is);

  bool operator==(const BankGroup&) const = default;

 private:
  using Key = std::pair<int, int>;
  static Key key_of(Modality m, Branch b) { return {static_cast<int>(m), static_cast<int>(b)}; }

  std::vector<Modality> modalities_;
  std::size_t capacity_ = 0;
  std::map<Key, MemoryBank> banks_;
};

}  // namespace i2md
