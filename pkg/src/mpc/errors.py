"""
Erros do núcleo MPC

Todas as falhas derivam de tipos nativos para que chamadores possam
capturá-las de forma ampla (RuntimeError, ValueError, OverflowError).
"""


class ProtocolFault(RuntimeError):
    """Falha que aborta a execução de um protocolo MPC."""


class UnauthorizedOpenError(ProtocolFault):
    """Abertura de um valor secreto não autorizada pelo protocolo em execução."""

    def __init__(self, step: str, recipient: str, kind: str):
        self.step = step
        self.recipient = recipient
        self.kind = kind
        super().__init__(
            f"Abertura não autorizada: passo='{step}', destinatário='{recipient}', tipo='{kind}'"
        )


class InconsistentSharesError(ProtocolFault):
    """Cópias replicadas de um mesmo componente divergem."""


class PreprocessingExhaustedError(ProtocolFault):
    """Pool de aleatoriedade correlacionada vazio com reabastecimento desligado."""


class DomainError(ProtocolFault, ValueError):
    """Entrada fora do domínio de div/sqrt detectada por abertura de guarda."""


class FixedPointOverflowError(OverflowError):
    """Valor real não representável no anel de ponto fixo."""


class BackendMismatchError(ValueError):
    """Combinação de valores secretos de backends ou coortes diferentes."""


class ShapeMismatchError(ValueError):
    """Formatos incompatíveis entre operandos."""


class UnknownEndpointError(KeyError):
    """Endpoint inexistente na rede simulada."""
