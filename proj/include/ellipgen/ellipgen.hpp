#ifndef ELLIPGEN_ELLIPGEN_HPP
#define ELLIPGEN_ELLIPGEN_HPP

#include "ellipgen/copula.hpp"
#include "ellipgen/core.hpp"
#include "ellipgen/data.hpp"
#include "ellipgen/elliptical.hpp"
#include "ellipgen/generator.hpp"
#include "ellipgen/io.hpp"
#include "ellipgen/mecip.hpp"
#include "ellipgen/rng.hpp"
#include "ellipgen/simfit.hpp"
#include "ellipgen/simstudy.hpp"

#endif  // ELLIPGEN_ELLIPGEN_HPP
