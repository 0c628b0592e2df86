#pragma once

#include <stdexcept>
#include <string>

namespace mmtr {

// Base of every exception thrown by the library.
class Error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error
{
public:
    using Error::Error;
};

class NotSymmetric : public Error
{
public:
    using Error::Error;
};

class NotPsd : public Error
{
public:
    using Error::Error;
};

class ZeroRow : public Error
{
public:
    using Error::Error;
};

class ZeroTruth : public Error
{
public:
    using Error::Error;
};

class UnknownGroup : public Error
{
public:
    explicit UnknownGroup(const std::string& id)
        : Error("unknown group: " + id), group_id(id) {}
    std::string group_id;
};

class InvalidArgument : public Error
{
public:
    using Error::Error;
};

} // namespace mmtr
