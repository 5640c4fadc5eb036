// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

namespace brainstack {

struct GradCheckResult {
  std::string name;
  double max_rel_err = 0.0;
  bool pass = false;
};

// Compare reverse-mode gradients against the central-difference oracle on
// randomized small problems, `seeds` independent draws per check. Modules:
// "primitives" (every graph op), "cnet", "ctnet", "router" (score -> softmax
// -> fuse -> head chain), "objective" (full weighted loss with logits as
// leaves), or "all".
std::vector<GradCheckResult> run_gradchecks(const std::string& module, int seeds = 20,
                                            double tol = 1e-4, double eps = 1e-3);

}  // namespace brainstack
