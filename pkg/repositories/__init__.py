"""Repositories package"""
from .report_repository import ReportRepository
from .tensor_repository import TensorRepository

__all__ = ['TensorRepository', 'ReportRepository']
