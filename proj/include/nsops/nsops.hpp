#pragma once

#include "nsops/assembly.hpp"
#include "nsops/control.hpp"
#include "nsops/conv_tensor.hpp"
#include "nsops/file_io.hpp"
#include "nsops/mesh.hpp"
#include "nsops/quadrature.hpp"
#include "nsops/saddle.hpp"
#include "nsops/solvers.hpp"
#include "nsops/sparse.hpp"
#include "nsops/types.hpp"
