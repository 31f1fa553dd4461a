"""异常定义：CLI 依据异常类型映射退出码"""


class DepSignalError(Exception):
    """所有领域异常的基类"""
    exit_code = 4


class ConfigError(DepSignalError):
    """配置无效或引用的路径不存在"""
    exit_code = 2


class DataValidationError(DepSignalError):
    """输入数据不符合约定格式"""
    exit_code = 3


class CorpusFormatError(DataValidationError):
    """语料 JSONL 格式错误或 tweet_id 重复"""


class ScoreFormatError(DataValidationError):
    """外部分数 CSV 格式错误"""


class LexiconError(DataValidationError):
    """词典文件定义错误（例如组合类别引用了未知类别）"""


class PatternError(DataValidationError):
    """模式文件无法编译或缺少必需的误报短语"""


class CohortError(DepSignalError):
    """队列构建失败（例如对照候选池不足）"""


class ModelError(DepSignalError):
    """模型训练或模型文件读写失败"""
