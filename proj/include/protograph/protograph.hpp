#pragma once

// Single include for the whole library.

#include "protograph/checkpoint.hpp"
#include "protograph/classifier.hpp"
#include "protograph/data.hpp"
#include "protograph/errors.hpp"
#include "protograph/eval.hpp"
#include "protograph/gradcheck.hpp"
#include "protograph/graph.hpp"
#include "protograph/kgtm.hpp"
#include "protograph/loss.hpp"
#include "protograph/matrix_io.hpp"
#include "protograph/optim.hpp"
#include "protograph/rng.hpp"
#include "protograph/taxonomy.hpp"
#include "protograph/train.hpp"
#include "protograph/types.hpp"
