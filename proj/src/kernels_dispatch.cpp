#include "wildsam/kernels.hpp"

#include <cstdlib>
#include <stdexcept>

namespace wildsam::kernels {

// Defined in kernels_avx2.cpp; nullptr on non-x86 builds.
const KernelTable* avx2_table_impl();

namespace {

bool cpu_has_avx2_fma() {
#if defined(__x86_64__) || defined(_M_X64)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* pick_default() {
  if (const char* env = std::getenv("WILDSAM_KERNELS")) {
    std::string want(env);
    if (want == "scalar") return &scalar_table();
    if (want == "avx2" && avx2_table()) return avx2_table();
  }
  if (const KernelTable* t = avx2_table()) return t;
  return &scalar_table();
}

const KernelTable*& active_slot() {
  static const KernelTable* slot = pick_default();
  return slot;
}

}  // namespace

const KernelTable* avx2_table() {
  static const KernelTable* t = cpu_has_avx2_fma() ? avx2_table_impl() : nullptr;
  return t;
}

const KernelTable& active() { return *active_slot(); }

void force(const std::string& name) {
  if (name == "scalar") {
    active_slot() = &scalar_table();
  } else if (name == "avx2") {
    if (!avx2_table()) throw std::runtime_error("avx2 kernels unavailable");
    active_slot() = avx2_table();
  } else if (name == "auto") {
    active_slot() = avx2_table() ? avx2_table() : &scalar_table();
  } else {
    throw std::runtime_error("unknown kernel table: " + name);
  }
}

}  // namespace wildsam::kernels
