#pragma once

#include "menupred/csv.hpp"
#include "menupred/dataset.hpp"
#include "menupred/embedding.hpp"
#include "menupred/errors.hpp"
#include "menupred/eval.hpp"
#include "menupred/features.hpp"
#include "menupred/linalg.hpp"
#include "menupred/manifest.hpp"
#include "menupred/model.hpp"
#include "menupred/optim.hpp"
#include "menupred/oracle.hpp"
#include "menupred/pca.hpp"
#include "menupred/rng.hpp"
#include "menupred/train.hpp"
#include "menupred/version.hpp"
