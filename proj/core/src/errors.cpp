#include "pixfuse/errors.hpp"
