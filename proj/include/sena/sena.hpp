#ifndef SENA_SENA_HPP
#define SENA_SENA_HPP

#include "analysis.hpp"
#include "checkpoint.hpp"
#include "config.hpp"
#include "data.hpp"
#include "error.hpp"
#include "gradcheck.hpp"
#include "losses.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "optimizer.hpp"
#include "pathways.hpp"
#include "rng.hpp"
#include "stats.hpp"
#include "synthetic.hpp"
#include "tape.hpp"
#include "tensor.hpp"
#include "trainer.hpp"

#endif
