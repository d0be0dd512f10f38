#include <malloc.h>

#include "ae2i/cli.hpp"

int main(int argc, char** argv) {
  // Tapes allocate and free many mid-sized buffers per sample; keep them in
  // the heap instead of returning pages to the OS after every backward pass.
  mallopt(M_MMAP_THRESHOLD, 32 << 20);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  return ae2i::run_cli(argc, argv);
}
