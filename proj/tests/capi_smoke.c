/* The public header must compile as C and the library must link from C. */
#include <stdio.h>

#include "strataclip/strataclip.h"

int main(void) {
  double g[2] = {3.0, 4.0};
  int32_t counts[4];
  const double probs[4] = {0.373, 0.197, 0.117, 0.314};
  if (sc_clip_by_norm(g, 2, 1.0) != SC_OK || g[0] != 0.6 || g[1] != 0.8) {
    fprintf(stderr, "clip failed: %s\n", sc_last_error());
    return 1;
  }
  if (sc_allocate_counts(probs, 4, 16, counts) != SC_OK || counts[0] != 6 || counts[3] != 5) {
    fprintf(stderr, "allocation failed: %s\n", sc_last_error());
    return 1;
  }
  printf("strataclip %s\n", sc_version());
  return 0;
}
