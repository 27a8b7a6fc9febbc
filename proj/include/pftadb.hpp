#ifndef PFTADB_HPP
#define PFTADB_HPP

#include "pftadb/error.hpp"
#include "pftadb/rng.hpp"
#include "pftadb/tensor.hpp"
#include "pftadb/autodiff.hpp"
#include "pftadb/ops.hpp"
#include "pftadb/grad_check.hpp"
#include "pftadb/encoder.hpp"
#include "pftadb/prefix.hpp"
#include "pftadb/head.hpp"
#include "pftadb/model.hpp"
#include "pftadb/optim.hpp"
#include "pftadb/data.hpp"
#include "pftadb/trainer.hpp"
#include "pftadb/adb.hpp"
#include "pftadb/eval.hpp"
#include "pftadb/experiment.hpp"

#endif  // PFTADB_HPP
