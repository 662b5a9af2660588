#include "snet/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "snet/kernels_ref.hpp"

namespace snet::kernels {
namespace detail {

const KernelTable& scalar_table() {
  static const KernelTable table{
      Isa::kScalar,
      "scalar",
      &ref::gemm<float>,
      &ref::relu<float>,
      &ref::relu_backward<float>,
      &ref::add<float>,
      &ref::accumulate<float>,
      &ref::squared_error<float>,
      &ref::scaled_difference<float>,
      &ref::sum<float>,
      &ref::adam_update<float>,
      &ref::conv_direct<float>,
      &ref::conv_weight_grad<float>,
  };
  return table;
}

}  // namespace detail

bool isa_supported(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return true;
    case Isa::kAvx2:
#if defined(__x86_64__) || defined(__i386__)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

const KernelTable& table(Isa isa) {
  if (!isa_supported(isa)) throw std::invalid_argument("ISA not supported on this CPU");
  return isa == Isa::kAvx2 ? detail::avx2_table() : detail::scalar_table();
}

namespace {

const KernelTable* default_table() {
  if (const char* env = std::getenv("SNET_ISA"); env != nullptr && std::string(env) == "scalar") {
    return &detail::scalar_table();
  }
  return isa_supported(Isa::kAvx2) ? &detail::avx2_table() : &detail::scalar_table();
}

std::atomic<const KernelTable*>& active_slot() {
  static std::atomic<const KernelTable*> slot{default_table()};
  return slot;
}

}  // namespace

const KernelTable& active() { return *active_slot().load(std::memory_order_acquire); }

void set_active(Isa isa) { active_slot().store(&table(isa), std::memory_order_release); }

}  // namespace snet::kernels
