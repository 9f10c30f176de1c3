from .custom_exception import (
    ConfigError,
    CorpusFormatError,
    EncodingError,
    NumericalError,
    RelationCPException,
    SamplingError,
)
