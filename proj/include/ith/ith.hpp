#ifndef ITH_ITH_HPP
#define ITH_ITH_HPP

#include "ith/aia.hpp"
#include "ith/dataio.hpp"
#include "ith/eigen.hpp"
#include "ith/error.hpp"
#include "ith/infotheory.hpp"
#include "ith/matrix.hpp"
#include "ith/network.hpp"
#include "ith/pipeline.hpp"
#include "ith/retrieval.hpp"
#include "ith/spe.hpp"
#include "ith/tensor.hpp"

#endif  // ITH_ITH_HPP
