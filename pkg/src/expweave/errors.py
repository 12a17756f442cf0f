"""Exception hierarchy shared across the package."""


class ExpweaveError(Exception):
    """Base class for all package errors."""


# --- backend ---

class TransportError(ExpweaveError):
    """Network failure or timeout that survived all retries."""


class AuthError(ExpweaveError):
    """Endpoint rejected the bearer token (401/403)."""


class MalformedResponse(ExpweaveError):
    """Reply body does not follow the chat wire protocol."""


class UnscriptedRequest(ExpweaveError):
    """Scripted backend has no reply registered for this key."""

    def __init__(self, template_id: str, slot_digest: str):
        self.template_id = template_id
        self.slot_digest = slot_digest
        super().__init__(f"no script registered for ({template_id}, {slot_digest})")


class DuplicateScript(ExpweaveError):
    """Same key registered twice with different replies."""


# --- storage ---

class VersionMismatch(ExpweaveError):
    """File carries an unsupported format version."""


class CorruptFile(ExpweaveError):
    """Content checksum does not match the stored one."""


class SchemaError(ExpweaveError):
    """File or record violates the expected schema."""


class IntegrityError(ExpweaveError):
    """Cross-reference or provenance invariant violated."""


# --- LLM reply handling ---

class ParseError(ExpweaveError):
    """Reply could not be parsed even after the repair retry."""


class EmptyAbstraction(ExpweaveError):
    """Abstraction produced zero experience units."""


class MergeParseError(ParseError):
    """Combination reply unparseable after the repair retry."""


class EmptyRevision(ExpweaveError):
    """Revision reply was blank after the repair retry."""


class RangeError(ExpweaveError):
    """Parsed numeric value falls outside its legal range."""


class PrecondError(ExpweaveError):
    """Operation called with inputs that violate its precondition."""


# --- pipeline / evaluation ---

class PipelineError(ExpweaveError):
    """Agent loop aborted; carries the partial trace built so far."""

    def __init__(self, message: str, partial_trace=None):
        self.partial_trace = partial_trace
        super().__init__(message)


class MismatchedPair(ExpweaveError):
    """Paired scores do not share (evaluator, run, text, dimension)."""


class EmptyInput(ExpweaveError):
    """Operation requires a non-empty input collection."""


# --- statistics ---

class DegenerateDesign(ExpweaveError):
    """Panel lacks the factor levels or replication a test needs."""


# --- harness ---

class UsageError(ExpweaveError):
    """Invalid harness or CLI invocation."""
